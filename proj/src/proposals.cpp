#include "plrefine/proposals.hpp"

#include <cmath>

#include "plrefine/error.hpp"

namespace plr {
namespace {

void check_lambda(double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw InvalidArgument("lambda must lie in (0, 1)");
}

}  // namespace

Proposal::Proposal(const Box3D& box_, double confidence_, ProposalOrigin origin_)
    : box(box_), confidence(confidence_), origin(origin_) {
  if (!(confidence >= 0.0 && confidence <= 1.0)) throw InvalidArgument("proposal confidence outside [0, 1]");
}

void IEConfig::validate() const {
  if (!(t_iou >= 0.0 && t_iou <= 1.0)) throw InvalidArgument("t_iou must lie in [0, 1]");
  check_lambda(lambda);
  if (!(nms_split_threshold >= 0.0 && nms_split_threshold <= 1.0)) {
    throw InvalidArgument("nms_split_threshold must lie in [0, 1]");
  }
}

ConfidenceSplit select_highest_confidence(std::span<const Proposal> props, const IEConfig& cfg) {
  if (props.empty()) throw InvalidArgument("select_highest_confidence: no proposals");
  cfg.validate();
  std::vector<Box3D> boxes;
  std::vector<double> scores;
  boxes.reserve(props.size());
  scores.reserve(props.size());
  for (const Proposal& p : props) {
    boxes.push_back(p.box);
    scores.push_back(p.confidence);
  }
  ConfidenceSplit split;
  split.highest = nms(boxes, scores, cfg.nms_split_threshold, IouKind::ThreeD);
  std::vector<bool> is_high(props.size(), false);
  for (std::size_t i : split.highest) is_high[i] = true;
  for (std::size_t i = 0; i < props.size(); ++i) {
    if (!is_high[i]) split.remainder.push_back(i);
  }
  return split;
}

std::optional<ClosestMatch> closest_proposal(const Proposal& anchor, std::span<const Proposal> candidates) {
  std::optional<ClosestMatch> best;
  for (std::size_t j = 0; j < candidates.size(); ++j) {
    const double sigma = iou_3d(anchor.box, candidates[j].box);
    if (sigma > 0.0 && (!best || sigma > best->iou)) best = ClosestMatch{j, sigma};
  }
  return best;
}

Proposal interpolate(const Proposal& anchor, const Proposal& closest, double lambda) {
  check_lambda(lambda);
  const Vec3& oi = anchor.box.center();
  const Vec3& oj = closest.box.center();
  return {anchor.box.with_center(oi - lambda * (oi - oj)), anchor.confidence, ProposalOrigin::Interpolated};
}

Proposal extrapolate(const Proposal& anchor, const Proposal& closest, double lambda) {
  check_lambda(lambda);
  const Vec3& oi = anchor.box.center();
  const Vec3& oj = closest.box.center();
  return {anchor.box.with_center(oi + lambda * (oi - oj)), anchor.confidence, ProposalOrigin::Extrapolated};
}

std::vector<Proposal> augment_proposals(std::span<const Proposal> props, const IEConfig& cfg) {
  cfg.validate();
  std::vector<Proposal> out(props.begin(), props.end());
  if (props.empty()) return out;

  const ConfidenceSplit split = select_highest_confidence(props, cfg);
  std::vector<Proposal> remainder;
  remainder.reserve(split.remainder.size());
  for (std::size_t j : split.remainder) remainder.push_back(props[j]);

  for (std::size_t i : split.highest) {
    const auto match = closest_proposal(props[i], remainder);
    // sigma == t_iou is treated like the "different instances" branch.
    if (!match || !(match->iou > cfg.t_iou)) continue;
    out.push_back(interpolate(props[i], remainder[match->index], cfg.lambda));
    out.push_back(extrapolate(props[i], remainder[match->index], cfg.lambda));
  }
  return out;
}

}  // namespace plr
