#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "plrefine/error.hpp"
#include "plrefine/proposals.hpp"
#include "support/oracles.hpp"

using namespace plr;

namespace {

Proposal at(Vec3 c, double conf, Size3 s = {2, 2, 2}, double heading = 0.0) {
  return Proposal(Box3D(c, s, heading), conf);
}

std::vector<Proposal> random_proposals(RandomState& rng, std::size_t n) {
  std::vector<Proposal> props;
  for (std::size_t i = 0; i < n; ++i) props.emplace_back(oracle::random_box(rng, 6.0), rng.uniform());
  return props;
}

bool collinear(const Vec3& a, const Vec3& b, const Vec3& p) {
  const Vec3 u = b - a;
  const Vec3 v = p - a;
  const Vec3 cross{u.y * v.z - u.z * v.y, u.z * v.x - u.x * v.z, u.x * v.y - u.y * v.x};
  return norm(cross) <= 1e-9 * std::max(1.0, norm(u) * norm(v));
}

}  // namespace

TEST(IEConfig, Validates) {
  IEConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lambda = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c.lambda = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = IEConfig{};
  c.t_iou = 1.5;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Proposal, ValidatesConfidence) { EXPECT_THROW(at({0, 0, 0}, 1.5), InvalidArgument); }

TEST(SelectHighest, OverlappingPairSplits) {
  // Two 2 m cubes offset so that their 3D IoU is 0.3.
  const double shift = 2.0 * (1.0 - 2.0 * 0.3 / 1.3);
  const std::vector<Proposal> props{at({0, 0, 0}, 0.7), at({shift, 0, 0}, 0.9)};
  EXPECT_NEAR(iou_3d(props[0].box, props[1].box), 0.3, 1e-12);
  const ConfidenceSplit s = select_highest_confidence(props, IEConfig{});
  EXPECT_EQ(s.highest, (std::vector<std::size_t>{1}));
  EXPECT_EQ(s.remainder, (std::vector<std::size_t>{0}));
}

TEST(SelectHighest, DisjointProposalsAreAllHighest) {
  const std::vector<Proposal> props{at({0, 0, 0}, 0.2), at({10, 0, 0}, 0.9), at({20, 0, 0}, 0.5)};
  const ConfidenceSplit s = select_highest_confidence(props, IEConfig{});
  EXPECT_EQ(s.highest, (std::vector<std::size_t>{1, 2, 0}));
  EXPECT_TRUE(s.remainder.empty());
}

TEST(SelectHighest, EmptyInputThrows) {
  EXPECT_THROW(select_highest_confidence(std::vector<Proposal>{}, IEConfig{}), InvalidArgument);
}

TEST(SelectHighest, PartitionMatchesGreedyOracle) {
  RandomState rng(21);
  const std::vector<Proposal> props = random_proposals(rng, 512);
  std::vector<Box3D> boxes;
  std::vector<double> scores;
  for (const Proposal& p : props) {
    boxes.push_back(p.box);
    scores.push_back(p.confidence);
  }
  const auto expected =
      oracle::greedy_nms(boxes, scores, 0.01, [](const Box3D& a, const Box3D& b) { return iou_3d(a, b); });
  const ConfidenceSplit s = select_highest_confidence(props, IEConfig{});
  EXPECT_EQ(s.highest, expected);
  std::vector<std::size_t> all = s.highest;
  all.insert(all.end(), s.remainder.begin(), s.remainder.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i], i);
  EXPECT_TRUE(std::is_sorted(s.remainder.begin(), s.remainder.end()));
}

TEST(ClosestProposal, EmptyAndDisjoint) {
  const Proposal a = at({0, 0, 0}, 0.9);
  EXPECT_FALSE(closest_proposal(a, std::vector<Proposal>{}).has_value());
  EXPECT_FALSE(closest_proposal(a, std::vector<Proposal>{at({10, 0, 0}, 0.5)}).has_value());
}

TEST(ClosestProposal, SingleCandidate) {
  const Proposal a = at({0, 0, 0}, 0.9);
  const std::vector<Proposal> c{at({0.5, 0, 0}, 0.4)};
  const auto m = closest_proposal(a, c);
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ(m->index, 0u);
  EXPECT_NEAR(m->iou, 1.5 / 2.5, 1e-12);
}

TEST(ClosestProposal, TiesGoToLowerIndex) {
  const Proposal a = at({0, 0, 0}, 0.9);
  const std::vector<Proposal> c{at({5, 0, 0}, 0.1), at({0.5, 0, 0}, 0.4), at({-0.5, 0, 0}, 0.8)};
  const auto m = closest_proposal(a, c);
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ(m->index, 1u);
}

TEST(ClosestProposal, MatchesExhaustiveScan) {
  RandomState rng(22);
  for (int trial = 0; trial < 200; ++trial) {
    const Proposal anchor(oracle::random_box(rng, 2.0), 0.9);
    const std::vector<Proposal> cands = random_proposals(rng, 20);
    std::optional<std::size_t> best;
    double best_iou = 0.0;
    for (std::size_t j = 0; j < cands.size(); ++j) {
      const double v = iou_3d(anchor.box, cands[j].box);
      if (v > best_iou) {
        best_iou = v;
        best = j;
      }
    }
    const auto m = closest_proposal(anchor, cands);
    ASSERT_EQ(m.has_value(), best.has_value());
    if (m) {
      EXPECT_EQ(m->index, *best);
      EXPECT_EQ(m->iou, best_iou);
    }
  }
}

TEST(InterpolateExtrapolate, HandCases) {
  const Proposal i = at({2, 0, 0}, 0.8, {4, 2, 1.5}, 0.3);
  const Proposal j = at({0, 0, 0}, 0.5);
  EXPECT_EQ(interpolate(i, j, 0.5).box.center(), (Vec3{1, 0, 0}));
  EXPECT_EQ(interpolate(i, j, 0.25).box.center(), (Vec3{1.5, 0, 0}));
  EXPECT_EQ(extrapolate(i, j, 0.5).box.center(), (Vec3{3, 0, 0}));
  EXPECT_EQ(extrapolate(at({1, 1, 0}, 0.8), j, 0.5).box.center(), (Vec3{1.5, 1.5, 0}));
  EXPECT_EQ(interpolate(i, i, 0.5).box.center(), i.box.center());
  EXPECT_EQ(extrapolate(i, i, 0.5).box.center(), i.box.center());
  const Proposal p = interpolate(i, j, 0.5);
  EXPECT_EQ(p.box.size(), i.box.size());
  EXPECT_EQ(p.box.heading(), i.box.heading());
  EXPECT_EQ(p.confidence, 0.8);
  EXPECT_EQ(p.origin, ProposalOrigin::Interpolated);
  EXPECT_EQ(extrapolate(i, j, 0.5).origin, ProposalOrigin::Extrapolated);
  EXPECT_THROW(interpolate(i, j, 1.0), InvalidArgument);
  EXPECT_THROW(extrapolate(i, j, 0.0), InvalidArgument);
}

TEST(Augment, IsolatedProposalsAreUnchanged) {
  const std::vector<Proposal> props{at({0, 0, 0}, 0.9), at({10, 0, 0}, 0.8)};
  EXPECT_EQ(augment_proposals(props, IEConfig{}), props);
  EXPECT_TRUE(augment_proposals(std::vector<Proposal>{}, IEConfig{}).empty());
}

TEST(Augment, OneQualifyingPairAddsTwo) {
  const std::vector<Proposal> props{at({0, 0, 0}, 0.9), at({1, 0, 0}, 0.6)};
  const auto out = augment_proposals(props, IEConfig{});
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out[0], props[0]);
  EXPECT_EQ(out[1], props[1]);
  EXPECT_EQ(out[2].box.center(), (Vec3{0.5, 0, 0}));
  EXPECT_EQ(out[3].box.center(), (Vec3{-0.5, 0, 0}));
}

TEST(Augment, IouEqualToThresholdGeneratesNothing) {
  const std::vector<Proposal> props{at({0, 0, 0}, 0.9), at({1, 0, 0}, 0.6)};
  IEConfig cfg;
  cfg.nms_split_threshold = 0.01;
  cfg.t_iou = iou_3d(props[0].box, props[1].box);
  EXPECT_EQ(augment_proposals(props, cfg).size(), 2u);
  cfg.t_iou = std::nextafter(cfg.t_iou, 0.0);
  EXPECT_EQ(augment_proposals(props, cfg).size(), 4u);
}

TEST(Augment, PropertiesOnRandomScenes) {
  RandomState rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<Proposal> props = random_proposals(rng, 1 + rng.index(40));
    const IEConfig cfg;
    const auto out = augment_proposals(props, cfg);
    ASSERT_GE(out.size(), props.size());
    EXPECT_TRUE(std::equal(props.begin(), props.end(), out.begin()));
    const auto split = select_highest_confidence(props, cfg);
    EXPECT_LE(out.size() - props.size(), 2 * split.highest.size());
    EXPECT_EQ((out.size() - props.size()) % 2, 0u);

    // Generated pairs come in the order of the highest-confidence list.
    std::size_t k = props.size();
    for (std::size_t i : split.highest) {
      if (k == out.size()) break;
      if (out[k].box.size() != props[i].box.size() || out[k].box.heading() != props[i].box.heading()) continue;
      const Proposal& interp = out[k];
      const Proposal& extrap = out[k + 1];
      const Vec3 oi = props[i].box.center();
      const Vec3 mid = interp.box.center();
      const Vec3 far = extrap.box.center();
      // Distance from o_i is lambda times the pair distance, both sides.
      const double pair = 2.0 * norm(oi - mid);
      EXPECT_NEAR(norm(far - oi), 0.5 * pair, 1e-9);
      EXPECT_TRUE(collinear(oi, mid, far));
      EXPECT_EQ(interp.box.category(), props[i].box.category());
      EXPECT_EQ(extrap.confidence, props[i].confidence);
      k += 2;
    }
    EXPECT_EQ(k, out.size());
  }
}

TEST(Augment, BestIouPerObjectNeverDrops) {
  RandomState rng(24);
  for (int trial = 0; trial < 100; ++trial) {
    const Box3D gt = oracle::random_box(rng, 1.0);
    std::vector<Proposal> props;
    for (int k = 0; k < 6; ++k) props.emplace_back(oracle::nearby_box(gt, rng), rng.uniform());
    const auto out = augment_proposals(props, IEConfig{});
    double before = 0.0;
    double after = 0.0;
    for (const Proposal& p : props) before = std::max(before, iou_3d(p.box, gt));
    for (const Proposal& p : out) after = std::max(after, iou_3d(p.box, gt));
    EXPECT_GE(after, before);
  }
}
