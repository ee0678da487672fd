#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <vector>

#include "plrefine/geometry.hpp"
#include "plrefine/random.hpp"

namespace plr {

enum class Provenance { Detector, Replaced };

struct PseudoLabel {
  PseudoLabel(const Box3D& box, double confidence, Provenance provenance = Provenance::Detector);

  Box3D box;
  double confidence;  // in [0, 1]
  Provenance provenance;

  friend bool operator==(const PseudoLabel&, const PseudoLabel&) = default;
};

// [t_neg, t_pos] with 0 <= t_neg < t_pos <= 1.
class ThresholdMargin {
 public:
  ThresholdMargin(double t_neg, double t_pos);
  double t_neg() const { return t_neg_; }
  double t_pos() const { return t_pos_; }

 private:
  double t_neg_;
  double t_pos_;
};

enum class BoxClass { Discard, HighConfidence, Unreliable };

// Discard iff u <= t_neg, HighConfidence iff u >= t_pos. Throws InvalidArgument for u outside [0, 1].
BoxClass classify_pseudo_box(double confidence, const ThresholdMargin& margin);

// Probability of choosing BoxReplace for an unreliable box: (u - t_neg) / (t_pos - t_neg).
// PointRemove is chosen with the complement. Throws PreconditionViolation unless t_neg < u < t_pos.
double replace_probability(double confidence, const ThresholdMargin& margin);

// A box plus the points it held, stored in the box's local frame.
struct DonorEntry {
  Box3D box;
  PointCloud local_points;
};

// Snapshots the points of `cloud` inside `box` into its local frame. Local
// coordinates are clamped to the half-extents so a later rescale stays inside.
DonorEntry capture_donor(const PointCloud& cloud, const Box3D& box);

// Per-category high-confidence donors (B_h) and the boxes produced by
// BoxReplace (B^_h). Lives for one pseudo-label round.
class HighConfDatabase {
 public:
  void add_high_confidence(DonorEntry entry);
  void add_replaced(DonorEntry entry);

  std::span<const DonorEntry> donors(Category c) const;
  std::span<const DonorEntry> replaced(Category c) const;
  std::size_t donor_count() const;
  std::size_t replaced_count() const;
  void clear();

 private:
  std::map<Category, std::vector<DonorEntry>> high_;
  std::map<Category, std::vector<DonorEntry>> replaced_;
};

// Cloud with every point inside `box` removed; survivor order preserved.
PointCloud point_remove(const PointCloud& cloud, const Box3D& box);

struct ReplaceResult {
  PointCloud cloud;
  PseudoLabel label;
  std::size_t removed = 0;
  std::size_t pasted = 0;
};

// Removes the points inside `target.box` and pastes the donor's points rescaled
// into it. The returned label keeps the target geometry, provenance Replaced,
// confidence 1. Throws InvalidArgument when categories differ.
ReplaceResult box_replace(const PointCloud& cloud, const PseudoLabel& target, const DonorEntry& donor);

struct RefineStats {
  std::size_t discarded = 0;
  std::size_t high_confidence = 0;
  std::size_t replaced = 0;
  std::size_t point_removed = 0;
  std::size_t points_removed = 0;
  std::size_t points_pasted = 0;
  // Replaced boxes whose IoU with another supervising box is >= 0.1.
  std::size_t overlap_warnings = 0;
};

struct RefineResult {
  PointCloud cloud;
  // Supervising labels of this frame, in input order: high-confidence labels
  // verbatim and BoxReplace outputs in place of their unreliable source.
  std::vector<PseudoLabel> labels;
  RefineStats stats;
};

// Complementary augmentation of one frame.
//
// All high-confidence labels are captured into `db` first (from the untouched
// cloud), then unreliable labels are processed in input order: one uniform
// draw each; BoxReplace if the draw is below replace_probability and `db`
// holds a same-category donor (picked uniformly), PointRemove otherwise.
RefineResult refine_labels(const PointCloud& cloud, std::span<const PseudoLabel> labels,
                           const ThresholdMargin& margin, HighConfDatabase& db, RandomState& rng);

}  // namespace plr
