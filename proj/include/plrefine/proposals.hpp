#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "plrefine/geometry.hpp"

namespace plr {

enum class ProposalOrigin { Basic, Interpolated, Extrapolated };

struct Proposal {
  Proposal(const Box3D& box, double confidence, ProposalOrigin origin = ProposalOrigin::Basic);

  Box3D box;
  double confidence;  // in [0, 1]
  ProposalOrigin origin;

  friend bool operator==(const Proposal&, const Proposal&) = default;
};

// Interpolation / extrapolation settings. Defaults: T_iou 0.01, lambda 0.5, split NMS 0.01.
struct IEConfig {
  double t_iou = 0.01;
  double lambda = 0.5;
  double nms_split_threshold = 0.01;

  void validate() const;  // throws InvalidArgument
};

struct ConfidenceSplit {
  std::vector<std::size_t> highest;    // NMS survivors, by descending confidence
  std::vector<std::size_t> remainder;  // everything else, ascending index
};

// Splits proposals with 3D NMS at cfg.nms_split_threshold. Throws InvalidArgument on empty input.
ConfidenceSplit select_highest_confidence(std::span<const Proposal> props, const IEConfig& cfg);

struct ClosestMatch {
  std::size_t index;  // into the candidate span
  double iou;
};

// Candidate with the largest 3D IoU against `anchor` (lowest index on ties);
// empty when there are no candidates or none overlaps.
std::optional<ClosestMatch> closest_proposal(const Proposal& anchor, std::span<const Proposal> candidates);

// o_i - lambda * (o_i - o_j); everything else inherited from `anchor`.
Proposal interpolate(const Proposal& anchor, const Proposal& closest, double lambda);
// o_i + lambda * (o_i - o_j); everything else inherited from `anchor`.
Proposal extrapolate(const Proposal& anchor, const Proposal& closest, double lambda);

// Input proposals followed by one interpolated and one extrapolated proposal
// for every highest-confidence proposal whose closest remainder overlaps it
// by strictly more than cfg.t_iou.
std::vector<Proposal> augment_proposals(std::span<const Proposal> props, const IEConfig& cfg);

}  // namespace plr
