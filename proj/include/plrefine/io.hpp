#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "plrefine/geometry.hpp"
#include "plrefine/proposals.hpp"

namespace plr {

// Binary clouds: consecutive little-endian float32 (x, y, z, intensity).
// Values are narrowed to float on store.
PointCloud load_point_cloud(const std::filesystem::path& path);
void store_point_cloud(const std::filesystem::path& path, const PointCloud& cloud);

// One box per line:
//   frame_id category cx cy cz l w h heading confidence
// Reals are written with 17 significant digits; blank lines and lines starting with '#' are skipped.
struct LabelRecord {
  std::int64_t frame_id;
  Box3D box;
  double confidence;

  friend bool operator==(const LabelRecord&, const LabelRecord&) = default;
};

std::vector<LabelRecord> read_labels(std::istream& in);
void write_labels(std::ostream& out, std::span<const LabelRecord> labels);
std::vector<LabelRecord> load_labels(const std::filesystem::path& path);
void store_labels(const std::filesystem::path& path, std::span<const LabelRecord> labels);

// Label line plus a trailing origin column: basic | interpolated | extrapolated.
struct ProposalRecord {
  std::int64_t frame_id;
  Proposal proposal;
};

std::vector<ProposalRecord> read_proposals(std::istream& in);
void write_proposals(std::ostream& out, std::span<const ProposalRecord> proposals);
// Also accepts plain label files (origin basic).
std::vector<ProposalRecord> load_proposals(const std::filesystem::path& path);

std::string origin_name(ProposalOrigin o);

// Dataset layout written by `gen` and read by `refine`:
//   <root>/points/<frame:06d>.bin   <root>/labels/<frame:06d>.txt
struct FrameBundle {
  std::filesystem::path points;
  std::filesystem::path labels;
  std::int64_t frame_id;
};

// Zero-padded file stem, "000042" for frame 42.
std::string frame_stem(std::int64_t frame_id);

FrameBundle frame_bundle(const std::filesystem::path& root, std::int64_t frame_id);
// Frames under `root` that have a point file, sorted by id.
std::vector<FrameBundle> list_frames(const std::filesystem::path& root);

}  // namespace plr
