#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "plrefine/alignment.hpp"
#include "plrefine/error.hpp"
#include "support/oracles.hpp"

using namespace plr;

namespace {

RoiFeature feat(std::vector<double> v, Category c, Domain d = Domain::Source) { return RoiFeature(std::move(v), d, c); }

}  // namespace

TEST(RoiFeature, RejectsNonFinite) {
  EXPECT_THROW(feat({0.0, NAN}, Category::Car), InvalidArgument);
}

TEST(TripletConfig, Validates) {
  TripletConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.alpha, 1.0);
  EXPECT_EQ(c.eta, 0.1);
  c.alpha = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = TripletConfig{};
  c.eta = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Mining, SingleCandidates) {
  const RoiFeature a = feat({0, 0}, Category::Car);
  const std::vector<RoiFeature> pool{feat({1, 0}, Category::Pedestrian), feat({3, 0}, Category::Car)};
  EXPECT_EQ(hardest_positive(a, pool), std::optional<std::size_t>(1));
  EXPECT_EQ(hardest_negative(a, pool), std::optional<std::size_t>(0));
}

TEST(Mining, AbsentCandidates) {
  const RoiFeature a = feat({0, 0}, Category::Car);
  const std::vector<RoiFeature> cars{feat({1, 0}, Category::Car)};
  const std::vector<RoiFeature> peds{feat({1, 0}, Category::Pedestrian)};
  EXPECT_FALSE(hardest_negative(a, cars).has_value());
  EXPECT_FALSE(hardest_positive(a, peds).has_value());
  EXPECT_FALSE(hardest_positive(a, cars, 0).has_value());
}

TEST(Mining, TiesGoToLowerIndex) {
  const RoiFeature a = feat({0, 0}, Category::Car);
  const std::vector<RoiFeature> pool{feat({0, 2}, Category::Car), feat({2, 0}, Category::Car),
                                     feat({1, 0}, Category::Cyclist), feat({0, -1}, Category::Pedestrian)};
  EXPECT_EQ(hardest_positive(a, pool), std::optional<std::size_t>(0));
  EXPECT_EQ(hardest_negative(a, pool), std::optional<std::size_t>(2));
}

TEST(Mining, DimensionMismatchThrows) {
  const RoiFeature a = feat({0, 0}, Category::Car);
  const std::vector<RoiFeature> pool{feat({0, 0, 0}, Category::Car)};
  EXPECT_THROW(hardest_positive(a, pool), InvalidArgument);
  EXPECT_THROW(hardest_negative(a, pool), InvalidArgument);
  EXPECT_THROW(feature_distance(a, pool[0]), InvalidArgument);
}

TEST(Mining, MatchesExhaustiveOracle) {
  RandomState rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const auto pool = oracle::random_features(rng, 30, 8, Domain::Target);
    const auto anchors = oracle::random_features(rng, 5, 8, Domain::Source);
    for (const RoiFeature& a : anchors) {
      const oracle::Mined m = oracle::mine(a, pool, std::nullopt);
      EXPECT_EQ(hardest_positive(a, pool), m.positive);
      EXPECT_EQ(hardest_negative(a, pool), m.negative);
    }
  }
}

TEST(TripletLoss, HingeArithmetic) {
  // d(a, p) = 0, d(a, n) = 2: margin satisfied.
  const std::vector<RoiFeature> anchors{feat({0, 0}, Category::Car)};
  const std::vector<RoiFeature> pool1{feat({0, 0}, Category::Car), feat({2, 0}, Category::Pedestrian)};
  EXPECT_EQ(triplet_loss_pair(anchors, pool1, 1.0), 0.0);
  // d(a, p) = 2, d(a, n) = 0: 2 - 0 + 1.
  const std::vector<RoiFeature> pool2{feat({2, 0}, Category::Car), feat({0, 0}, Category::Pedestrian)};
  EXPECT_EQ(triplet_loss_pair(anchors, pool2, 1.0), 3.0);
  EXPECT_THROW(triplet_loss_pair(anchors, pool2, 0.0), InvalidArgument);
}

TEST(TripletLoss, SelfExclusionWithinOneSet) {
  const std::vector<RoiFeature> set{feat({0, 0}, Category::Car), feat({1, 0}, Category::Car),
                                    feat({5, 0}, Category::Pedestrian)};
  // Anchor 0: p = 1 (d 1), n = 2 (d 5) -> 0. Anchor 1: p = 0 (d 1), n = 2 (d 4) -> 0. Anchor 2: no positive.
  EXPECT_EQ(triplet_loss_pair(set, set, 1.0), 0.0);
  EXPECT_EQ(triplet_loss_pair(set, set, 5.0), (1.0 - 5.0 + 5.0) + (1.0 - 4.0 + 5.0));
  // Against a copy nothing is excluded: the pedestrian finds its twin at distance 0.
  const std::vector<RoiFeature> copy = set;
  EXPECT_EQ(triplet_loss_pair(set, copy, 5.0), (1.0 - 5.0 + 5.0) + (1.0 - 4.0 + 5.0) + (0.0 - 4.0 + 5.0));
}

TEST(TripletLoss, MatchesExhaustiveOracle) {
  RandomState rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = oracle::random_features(rng, 16, 6, Domain::Source);
    const auto t = oracle::random_features(rng, 1 + rng.index(20), 6, Domain::Target);
    EXPECT_EQ(triplet_loss_pair(s, s, 1.0), oracle::pair_loss(s, s, 1.0, true));
    EXPECT_EQ(triplet_loss_pair(s, t, 1.0), oracle::pair_loss(s, t, 1.0, false));
    EXPECT_EQ(triplet_loss_pair(t, s, 0.5), oracle::pair_loss(t, s, 0.5, false));
  }
}

TEST(TripletLoss, TotalIsSumOfFourPairs) {
  RandomState rng(33);
  const auto s = oracle::random_features(rng, 12, 4, Domain::Source);
  const auto t = oracle::random_features(rng, 9, 4, Domain::Target);
  const TripletLoss l = total_triplet_loss(s, t, 1.0);
  EXPECT_EQ(l.intra, triplet_loss_pair(s, s, 1.0) + triplet_loss_pair(t, t, 1.0));
  EXPECT_EQ(l.inter, triplet_loss_pair(s, t, 1.0) + triplet_loss_pair(t, s, 1.0));
  EXPECT_EQ(l.total, l.intra + l.inter);
}

TEST(TripletLoss, EmptyTargetContributesNothing) {
  RandomState rng(34);
  const auto s = oracle::random_features(rng, 12, 4, Domain::Source);
  const TripletLoss l = total_triplet_loss(s, {}, 1.0);
  EXPECT_EQ(l.inter, 0.0);
  EXPECT_EQ(l.intra, triplet_loss_pair(s, s, 1.0));
}

TEST(TripletLoss, MirroredSetsGiveEqualPairs) {
  // Every category has two members, so self-exclusion leaves the same
  // hardest positive as the cross-set search (which can pick the twin).
  RandomState rng(35);
  std::vector<RoiFeature> s;
  for (Category c : kKnownCategories) {
    for (int k = 0; k < 4; ++k) {
      std::vector<double> v(5);
      for (double& x : v) x = rng.normal();
      s.emplace_back(v, Domain::Source, c);
    }
  }
  std::vector<RoiFeature> t;
  for (const RoiFeature& f : s) t.emplace_back(f.values, Domain::Target, f.category);
  EXPECT_EQ(triplet_loss_pair(s, t, 1.0), triplet_loss_pair(s, s, 1.0));
}

TEST(TripletLoss, CollapsedClassesGiveZero) {
  std::vector<RoiFeature> s;
  std::vector<RoiFeature> t;
  for (int k = 0; k < 3; ++k) {
    s.push_back(feat({0, 0}, Category::Car));
    s.push_back(feat({3, 0}, Category::Pedestrian));
    t.push_back(feat({0, 0}, Category::Car, Domain::Target));
    t.push_back(feat({0, 3}, Category::Cyclist, Domain::Target));
  }
  EXPECT_EQ(total_triplet_loss(s, t, 1.0).total, 0.0);
}

TEST(TripletLoss, OrderInvariantAndNonNegative) {
  RandomState rng(36);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = oracle::random_features(rng, 20, 6, Domain::Source);
    auto t = oracle::random_features(rng, 20, 6, Domain::Target);
    const TripletLoss a = total_triplet_loss(s, t, 1.0);
    EXPECT_GE(a.intra, 0.0);
    EXPECT_GE(a.inter, 0.0);
    std::reverse(s.begin(), s.end());
    std::rotate(t.begin(), t.begin() + 7, t.end());
    const TripletLoss b = total_triplet_loss(s, t, 1.0);
    EXPECT_NEAR(a.total, b.total, 1e-9 * std::max(1.0, a.total));
  }
}

TEST(TripletLoss, ScalingKeepsMinedIndices) {
  RandomState rng(37);
  const auto pool = oracle::random_features(rng, 30, 6, Domain::Target);
  std::vector<RoiFeature> scaled;
  for (const RoiFeature& f : pool) {
    std::vector<double> v = f.values;
    for (double& x : v) x *= 4.0;
    scaled.emplace_back(v, f.domain, f.category);
  }
  for (std::size_t i = 0; i < pool.size(); ++i) {
    EXPECT_EQ(hardest_positive(pool[i], pool, i), hardest_positive(scaled[i], scaled, i));
    EXPECT_EQ(hardest_negative(pool[i], pool), hardest_negative(scaled[i], scaled));
    EXPECT_NEAR(feature_distance(scaled[i], scaled[0]), 4.0 * feature_distance(pool[i], pool[0]), 1e-12);
  }
}

TEST(CombinedLoss, Arithmetic) {
  EXPECT_DOUBLE_EQ(combined_loss(1.0, 2.0, TripletConfig{}), 1.2);
  EXPECT_EQ(combined_loss(1.5, 0.0, TripletConfig{}), 1.5);
}

TEST(FeatureCsv, RoundTrip) {
  RandomState rng(38);
  auto feats = oracle::random_features(rng, 25, 7, Domain::Source);
  const auto more = oracle::random_features(rng, 10, 7, Domain::Target);
  feats.insert(feats.end(), more.begin(), more.end());
  std::stringstream ss;
  write_features_csv(ss, feats);
  const auto back = read_features_csv(ss);
  ASSERT_EQ(back.size(), feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    EXPECT_EQ(back[i].values, feats[i].values);
    EXPECT_EQ(back[i].domain, feats[i].domain);
    EXPECT_EQ(back[i].category, feats[i].category);
  }
}

TEST(FeatureCsv, RejectsMalformedInput) {
  std::stringstream bad_header("x,y,f0\n");
  EXPECT_THROW(read_features_csv(bad_header), FormatError);
  std::stringstream short_row("domain,category,f0,f1\nsource,Car,1\n");
  EXPECT_THROW(read_features_csv(short_row), FormatError);
  std::stringstream bad_domain("domain,category,f0\nother,Car,1\n");
  EXPECT_THROW(read_features_csv(bad_domain), DataError);
}
