#include "plrefine/refinery.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "plrefine/error.hpp"

namespace plr {
namespace {

constexpr double kOverlapWarnIou = 0.1;

const std::vector<DonorEntry> kNoEntries;

std::span<const DonorEntry> lookup(const std::map<Category, std::vector<DonorEntry>>& m, Category c) {
  const auto it = m.find(c);
  return it == m.end() ? std::span<const DonorEntry>(kNoEntries) : std::span<const DonorEntry>(it->second);
}

std::size_t total(const std::map<Category, std::vector<DonorEntry>>& m) {
  std::size_t n = 0;
  for (const auto& [c, v] : m) n += v.size();
  return n;
}

}  // namespace

PseudoLabel::PseudoLabel(const Box3D& box_, double confidence_, Provenance provenance_)
    : box(box_), confidence(confidence_), provenance(provenance_) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) throw InvalidArgument("pseudo label confidence outside [0, 1]");
}

ThresholdMargin::ThresholdMargin(double t_neg, double t_pos) : t_neg_(t_neg), t_pos_(t_pos) {
  if (!(t_neg >= 0.0 && t_neg < t_pos && t_pos <= 1.0)) {
    throw InvalidArgument("threshold margin needs 0 <= t_neg < t_pos <= 1");
  }
}

BoxClass classify_pseudo_box(double confidence, const ThresholdMargin& margin) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) throw InvalidArgument("confidence outside [0, 1]");
  if (confidence <= margin.t_neg()) return BoxClass::Discard;
  if (confidence >= margin.t_pos()) return BoxClass::HighConfidence;
  return BoxClass::Unreliable;
}

double replace_probability(double confidence, const ThresholdMargin& margin) {
  if (!(confidence > margin.t_neg() && confidence < margin.t_pos())) {
    throw PreconditionViolation("replace_probability: confidence must lie strictly inside the margin");
  }
  return (confidence - margin.t_neg()) / (margin.t_pos() - margin.t_neg());
}

DonorEntry capture_donor(const PointCloud& cloud, const Box3D& box) {
  const double hl = 0.5 * box.size().length;
  const double hw = 0.5 * box.size().width;
  const double hh = 0.5 * box.size().height;
  PointCloud local;
  for (std::size_t i : points_in_box(cloud, box)) {
    const Vec3 p = ego_to_local(cloud[i].position(), box);
    local.push_back({std::clamp(p.x, -hl, hl), std::clamp(p.y, -hw, hw), std::clamp(p.z, -hh, hh),
                     cloud[i].intensity});
  }
  return {box, std::move(local)};
}

void HighConfDatabase::add_high_confidence(DonorEntry entry) {
  high_[entry.box.category()].push_back(std::move(entry));
}

void HighConfDatabase::add_replaced(DonorEntry entry) { replaced_[entry.box.category()].push_back(std::move(entry)); }

std::span<const DonorEntry> HighConfDatabase::donors(Category c) const { return lookup(high_, c); }

std::span<const DonorEntry> HighConfDatabase::replaced(Category c) const { return lookup(replaced_, c); }

std::size_t HighConfDatabase::donor_count() const { return total(high_); }

std::size_t HighConfDatabase::replaced_count() const { return total(replaced_); }

void HighConfDatabase::clear() {
  high_.clear();
  replaced_.clear();
}

PointCloud point_remove(const PointCloud& cloud, const Box3D& box) {
  const std::vector<std::size_t> inside = points_in_box(cloud, box);
  std::vector<LidarPoint> kept;
  kept.reserve(cloud.size() - inside.size());
  std::size_t next = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (next < inside.size() && inside[next] == i) {
      ++next;
      continue;
    }
    kept.push_back(cloud[i]);
  }
  return PointCloud(std::move(kept));
}

ReplaceResult box_replace(const PointCloud& cloud, const PseudoLabel& target, const DonorEntry& donor) {
  if (donor.box.category() != target.box.category()) {
    throw InvalidArgument("box_replace: donor category " + category_name(donor.box.category()) +
                          " does not match " + category_name(target.box.category()));
  }
  PointCloud out = point_remove(cloud, target.box);
  const std::size_t removed = cloud.size() - out.size();
  out.reserve(out.size() + donor.local_points.size());
  for (const LidarPoint& lp : donor.local_points) {
    const Vec3 p = local_to_ego_scaled(lp.position(), donor.box.size(), target.box);
    out.push_back({p.x, p.y, p.z, lp.intensity});
  }
  return {std::move(out), PseudoLabel(target.box, 1.0, Provenance::Replaced), removed, donor.local_points.size()};
}

RefineResult refine_labels(const PointCloud& cloud, std::span<const PseudoLabel> labels,
                           const ThresholdMargin& margin, HighConfDatabase& db, RandomState& rng) {
  RefineResult result{cloud, {}, {}};
  std::vector<BoxClass> classes;
  classes.reserve(labels.size());
  for (const PseudoLabel& l : labels) {
    classes.push_back(classify_pseudo_box(l.confidence, margin));
    if (classes.back() == BoxClass::HighConfidence) db.add_high_confidence(capture_donor(cloud, l.box));
  }

  for (std::size_t i = 0; i < labels.size(); ++i) {
    const PseudoLabel& label = labels[i];
    switch (classes[i]) {
      case BoxClass::Discard:
        ++result.stats.discarded;
        break;
      case BoxClass::HighConfidence:
        ++result.stats.high_confidence;
        result.labels.push_back(label);
        break;
      case BoxClass::Unreliable: {
        const double draw = rng.uniform();
        const auto donors = db.donors(label.box.category());
        if (draw < replace_probability(label.confidence, margin) && !donors.empty()) {
          const DonorEntry& donor = donors[rng.index(donors.size())];
          ReplaceResult r = box_replace(result.cloud, label, donor);
          result.stats.points_removed += r.removed;
          result.stats.points_pasted += r.pasted;
          ++result.stats.replaced;
          db.add_replaced(capture_donor(r.cloud, r.label.box));
          result.cloud = std::move(r.cloud);
          result.labels.push_back(r.label);
        } else {
          const std::size_t before = result.cloud.size();
          result.cloud = point_remove(result.cloud, label.box);
          result.stats.points_removed += before - result.cloud.size();
          ++result.stats.point_removed;
        }
        break;
      }
    }
  }

  for (std::size_t i = 0; i < result.labels.size(); ++i) {
    if (result.labels[i].provenance != Provenance::Replaced) continue;
    for (std::size_t j = 0; j < result.labels.size(); ++j) {
      if (j != i && iou_3d(result.labels[i].box, result.labels[j].box) >= kOverlapWarnIou) {
        ++result.stats.overlap_warnings;
        break;
      }
    }
  }
  return result;
}

}  // namespace plr
