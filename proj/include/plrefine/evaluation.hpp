#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plrefine/geometry.hpp"

namespace plr {

struct Detection {
  Box3D box;
  double score;
  std::int64_t frame_id;
};

struct GroundTruth {
  Box3D box;
  std::int64_t frame_id;
};

// Matching threshold per class: 0.7 for cars, 0.5 for pedestrians, cyclists and unknown ids.
double default_iou_threshold(Category c);

// One-to-one greedy matching. `dets` must be sorted by descending score
// (InvalidArgument otherwise). A detection is a true positive iff the unmatched
// same-frame, same-category ground truth it overlaps most has IoU >= iou_threshold.
std::vector<bool> match_detections(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                                   double iou_threshold, IouKind kind);

// Mean interpolated precision at recall 1/40 .. 40/40, in percent.
// Throws UndefinedMetric when num_ground_truths is 0.
double average_precision_r40(const std::vector<bool>& tp_flags, std::size_t num_ground_truths);

// AP of one category: filters both sets by category, sorts detections by score
// (stable), matches and integrates.
double average_precision(std::span<const Detection> dets, std::span<const GroundTruth> gts, Category category,
                         double iou_threshold, IouKind kind);

// (model - source_only) / (oracle - source_only) * 100. Throws UndefinedMetric when oracle == source_only.
double closed_gap(double ap_model, double ap_source_only, double ap_oracle);

struct ReferenceAp {
  double source_only_bev;
  double source_only_3d;
  double oracle_bev;
  double oracle_3d;
};

struct EvalRow {
  std::string task;
  Category category;
  double ap_bev;
  double ap_3d;
  std::optional<double> closed_gap_bev;
  std::optional<double> closed_gap_3d;
};

// One row per category present in `gts` (category order), default matching
// thresholds. Closed gaps are filled for categories found in `reference`.
std::vector<EvalRow> evaluate(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                              const std::string& task, const std::map<Category, ReferenceAp>& reference = {});

// Header "category,source_only_bev,source_only_3d,oracle_bev,oracle_3d".
std::map<Category, ReferenceAp> read_reference_csv(std::istream& in);

// Header "task,category,AP_BEV,AP_3D,closed_gap_bev,closed_gap_3d"; missing closed gaps are empty cells.
void write_eval_csv(std::ostream& out, std::span<const EvalRow> rows);

}  // namespace plr
