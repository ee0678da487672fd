#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "plrefine/geometry.hpp"

namespace plr {

enum class Domain { Source, Target };

struct RoiFeature {
  RoiFeature(std::vector<double> values, Domain domain, Category category);  // throws on non-finite entries

  std::vector<double> values;
  Domain domain;
  Category category;
};

struct TripletConfig {
  double alpha = 1.0;  // margin, > 0
  double eta = 0.1;    // loss trade-off, in (0, 1)

  void validate() const;
};

double feature_distance(const RoiFeature& a, const RoiFeature& b);

// Same-category member of `pool` farthest from `anchor` (lowest index on ties).
// `exclude` removes one pool index, used when the anchor is itself a pool member.
std::optional<std::size_t> hardest_positive(const RoiFeature& anchor, std::span<const RoiFeature> pool,
                                            std::optional<std::size_t> exclude = std::nullopt);

// Different-category member of `pool` closest to `anchor` (lowest index on ties).
std::optional<std::size_t> hardest_negative(const RoiFeature& anchor, std::span<const RoiFeature> pool);

// Sum over anchors in `anchors` of max(d(a, p) - d(a, n) + alpha, 0) with
// batch-hard mining in `pool`. Anchors without a positive or a negative add 0.
// When both spans view the same sequence each anchor is excluded from its own
// positive candidates.
double triplet_loss_pair(std::span<const RoiFeature> anchors, std::span<const RoiFeature> pool, double alpha);

struct TripletLoss {
  double intra = 0.0;  // L(s,s) + L(t,t)
  double inter = 0.0;  // L(s,t) + L(t,s)
  double total = 0.0;
};

TripletLoss total_triplet_loss(std::span<const RoiFeature> source, std::span<const RoiFeature> target, double alpha);

// det_loss + eta * triplet_total.
double combined_loss(double det_loss, double triplet_total, const TripletConfig& cfg);

// CSV with header "domain,category,f0,...,f{D-1}", one row per feature.
void write_features_csv(std::ostream& out, std::span<const RoiFeature> features);
std::vector<RoiFeature> read_features_csv(std::istream& in);

}  // namespace plr
