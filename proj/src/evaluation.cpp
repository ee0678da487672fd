#include "plrefine/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <istream>
#include <ostream>
#include <set>

#include "plrefine/error.hpp"
#include "plrefine/text.hpp"

namespace plr {

double default_iou_threshold(Category c) { return c == Category::Car ? 0.7 : 0.5; }

std::vector<bool> match_detections(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                                   double iou_threshold, IouKind kind) {
  for (std::size_t i = 1; i < dets.size(); ++i) {
    if (dets[i].score > dets[i - 1].score) throw InvalidArgument("match_detections: detections not sorted by score");
  }
  std::map<std::int64_t, std::vector<std::size_t>> gts_by_frame;
  for (std::size_t g = 0; g < gts.size(); ++g) gts_by_frame[gts[g].frame_id].push_back(g);

  std::vector<bool> matched(gts.size(), false);
  std::vector<bool> tp(dets.size(), false);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    const auto it = gts_by_frame.find(dets[d].frame_id);
    if (it == gts_by_frame.end()) continue;
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t g : it->second) {
      if (matched[g] || gts[g].box.category() != dets[d].box.category()) continue;
      const double v = iou(dets[d].box, gts[g].box, kind);
      if (v > best_iou) {
        best = g;
        best_iou = v;
      }
    }
    if (best && best_iou >= iou_threshold) {
      matched[*best] = true;
      tp[d] = true;
    }
  }
  return tp;
}

double average_precision_r40(const std::vector<bool>& tp_flags, std::size_t num_ground_truths) {
  if (num_ground_truths == 0) throw UndefinedMetric("average precision needs at least one ground truth");
  constexpr std::size_t kPositions = 40;
  const std::size_t n = tp_flags.size();
  std::vector<std::size_t> tp_count(n);
  std::vector<double> suffix_best(n + 1, 0.0);  // max precision over [i, n)
  std::size_t tp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tp_flags[i]) ++tp;
    tp_count[i] = tp;
  }
  for (std::size_t i = n; i-- > 0;) {
    suffix_best[i] = std::max(suffix_best[i + 1], static_cast<double>(tp_count[i]) / static_cast<double>(i + 1));
  }
  // Recall k/40 is reached at the first i with tp * 40 >= k * num_gt; integer
  // comparison keeps the sampling exact.
  double sum = 0.0;
  std::size_t i = 0;
  for (std::size_t k = 1; k <= kPositions; ++k) {
    while (i < n && tp_count[i] * kPositions < k * num_ground_truths) ++i;
    sum += suffix_best[i];
  }
  return 100.0 * sum / kPositions;
}

double average_precision(std::span<const Detection> dets, std::span<const GroundTruth> gts, Category category,
                         double iou_threshold, IouKind kind) {
  std::vector<Detection> cat_dets;
  for (const Detection& d : dets) {
    if (d.box.category() == category) cat_dets.push_back(d);
  }
  std::stable_sort(cat_dets.begin(), cat_dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<GroundTruth> cat_gts;
  for (const GroundTruth& g : gts) {
    if (g.box.category() == category) cat_gts.push_back(g);
  }
  return average_precision_r40(match_detections(cat_dets, cat_gts, iou_threshold, kind), cat_gts.size());
}

double closed_gap(double ap_model, double ap_source_only, double ap_oracle) {
  const double gap = ap_oracle - ap_source_only;
  if (gap == 0.0) throw UndefinedMetric("closed gap undefined when oracle AP equals source-only AP");
  return (ap_model - ap_source_only) / gap * 100.0;
}

std::vector<EvalRow> evaluate(std::span<const Detection> dets, std::span<const GroundTruth> gts,
                              const std::string& task, const std::map<Category, ReferenceAp>& reference) {
  std::set<Category> present;
  for (const GroundTruth& g : gts) present.insert(g.box.category());
  std::vector<EvalRow> rows;
  for (Category c : present) {
    const double thr = default_iou_threshold(c);
    EvalRow row{task, c, average_precision(dets, gts, c, thr, IouKind::Bev),
                average_precision(dets, gts, c, thr, IouKind::ThreeD), std::nullopt, std::nullopt};
    if (const auto it = reference.find(c); it != reference.end()) {
      row.closed_gap_bev = closed_gap(row.ap_bev, it->second.source_only_bev, it->second.oracle_bev);
      row.closed_gap_3d = closed_gap(row.ap_3d, it->second.source_only_3d, it->second.oracle_3d);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::map<Category, ReferenceAp> read_reference_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("reference CSV is empty");
  const std::vector<std::string> expected{"category", "source_only_bev", "source_only_3d", "oracle_bev", "oracle_3d"};
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (split(line, ',') != expected) {
    throw FormatError("reference CSV header must be category,source_only_bev,source_only_3d,oracle_bev,oracle_3d");
  }
  std::map<Category, ReferenceAp> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != 5) throw FormatError("reference CSV line " + std::to_string(line_no) + ": expected 5 cells");
    out[parse_category(cells[0])] = {parse_real(cells[1]), parse_real(cells[2]), parse_real(cells[3]),
                                     parse_real(cells[4])};
  }
  return out;
}

void write_eval_csv(std::ostream& out, std::span<const EvalRow> rows) {
  out << "task,category,AP_BEV,AP_3D,closed_gap_bev,closed_gap_3d\n";
  for (const EvalRow& r : rows) {
    out << r.task << ',' << category_name(r.category) << ',' << format_real(r.ap_bev) << ','
        << format_real(r.ap_3d) << ',' << (r.closed_gap_bev ? format_real(*r.closed_gap_bev) : "") << ','
        << (r.closed_gap_3d ? format_real(*r.closed_gap_3d) : "") << '\n';
  }
}

}  // namespace plr
