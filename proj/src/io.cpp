#include "plrefine/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "plrefine/error.hpp"
#include "plrefine/text.hpp"

namespace plr {
namespace {

constexpr std::size_t kRecordBytes = 16;
constexpr std::size_t kLabelFields = 10;

float read_f32_le(const unsigned char* b) {
  const std::uint32_t u = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
                          (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return std::bit_cast<float>(u);
}

void write_f32_le(std::array<unsigned char, kRecordBytes>& buf, std::size_t offset, float v) {
  const auto u = std::bit_cast<std::uint32_t>(v);
  for (std::size_t k = 0; k < 4; ++k) buf[offset + k] = static_cast<unsigned char>((u >> (8 * k)) & 0xffU);
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return in;
}

LabelRecord parse_label_fields(const std::vector<std::string>& f, std::size_t line_no) {
  try {
    const std::int64_t frame = parse_integer(f[0]);
    const Category cat = parse_category(f[1]);
    const Vec3 center{parse_real(f[2]), parse_real(f[3]), parse_real(f[4])};
    const Size3 size{parse_real(f[5]), parse_real(f[6]), parse_real(f[7])};
    const double heading = parse_real(f[8]);
    const double confidence = parse_real(f[9]);
    if (!(confidence >= 0.0 && confidence <= 1.0)) throw DataError("confidence outside [0, 1]");
    return {frame, Box3D(center, size, heading, cat), confidence};
  } catch (const FormatError& e) {
    throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
  } catch (const std::exception& e) {
    throw DataError("line " + std::to_string(line_no) + ": " + e.what());
  }
}

void write_label_fields(std::ostream& out, std::int64_t frame, const Box3D& b, double confidence) {
  out << frame << ' ' << category_name(b.category()) << ' ' << format_real(b.center().x) << ' '
      << format_real(b.center().y) << ' ' << format_real(b.center().z) << ' ' << format_real(b.size().length) << ' '
      << format_real(b.size().width) << ' ' << format_real(b.size().height) << ' ' << format_real(b.heading())
      << ' ' << format_real(confidence);
}

template <typename Fn>
void for_each_record_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto fields = split_whitespace(line);
    if (fields.empty() || fields[0].front() == '#') continue;
    fn(fields, line_no);
  }
}

ProposalOrigin parse_origin(const std::string& s) {
  if (s == "basic") return ProposalOrigin::Basic;
  if (s == "interpolated") return ProposalOrigin::Interpolated;
  if (s == "extrapolated") return ProposalOrigin::Extrapolated;
  throw DataError("unknown proposal origin '" + s + "'");
}

}  // namespace

PointCloud load_point_cloud(const std::filesystem::path& path) {
  std::ifstream in = open_in(path, std::ios::binary);
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() % kRecordBytes != 0) {
    throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of 16 bytes");
  }
  std::vector<LidarPoint> points;
  points.reserve(bytes.size() / kRecordBytes);
  for (std::size_t off = 0; off < bytes.size(); off += kRecordBytes) {
    const LidarPoint p{read_f32_le(&bytes[off]), read_f32_le(&bytes[off + 4]), read_f32_le(&bytes[off + 8]),
                       read_f32_le(&bytes[off + 12])};
    if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) || !std::isfinite(p.intensity)) {
      throw DataError(path.string() + ": non-finite value in record " + std::to_string(off / kRecordBytes));
    }
    points.push_back(p);
  }
  return PointCloud(std::move(points));
}

void store_point_cloud(const std::filesystem::path& path, const PointCloud& cloud) {
  std::ofstream out = open_out(path, std::ios::binary);
  std::array<unsigned char, kRecordBytes> buf{};
  for (const LidarPoint& p : cloud) {
    write_f32_le(buf, 0, static_cast<float>(p.x));
    write_f32_le(buf, 4, static_cast<float>(p.y));
    write_f32_le(buf, 8, static_cast<float>(p.z));
    write_f32_le(buf, 12, static_cast<float>(p.intensity));
    out.write(reinterpret_cast<const char*>(buf.data()), buf.size());
  }
}

std::vector<LabelRecord> read_labels(std::istream& in) {
  std::vector<LabelRecord> out;
  for_each_record_line(in, [&](const std::vector<std::string>& f, std::size_t line_no) {
    if (f.size() != kLabelFields) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 10 fields, got " + std::to_string(f.size()));
    }
    out.push_back(parse_label_fields(f, line_no));
  });
  return out;
}

void write_labels(std::ostream& out, std::span<const LabelRecord> labels) {
  for (const LabelRecord& r : labels) {
    write_label_fields(out, r.frame_id, r.box, r.confidence);
    out << '\n';
  }
}

std::vector<LabelRecord> load_labels(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return read_labels(in);
}

void store_labels(const std::filesystem::path& path, std::span<const LabelRecord> labels) {
  std::ofstream out = open_out(path);
  write_labels(out, labels);
}

std::string origin_name(ProposalOrigin o) {
  switch (o) {
    case ProposalOrigin::Basic:
      return "basic";
    case ProposalOrigin::Interpolated:
      return "interpolated";
    case ProposalOrigin::Extrapolated:
      return "extrapolated";
  }
  return "basic";
}

std::vector<ProposalRecord> read_proposals(std::istream& in) {
  std::vector<ProposalRecord> out;
  for_each_record_line(in, [&](const std::vector<std::string>& f, std::size_t line_no) {
    if (f.size() != kLabelFields && f.size() != kLabelFields + 1) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 10 or 11 fields");
    }
    const LabelRecord r = parse_label_fields(f, line_no);
    const ProposalOrigin origin = f.size() == kLabelFields ? ProposalOrigin::Basic : parse_origin(f[kLabelFields]);
    out.push_back({r.frame_id, Proposal(r.box, r.confidence, origin)});
  });
  return out;
}

void write_proposals(std::ostream& out, std::span<const ProposalRecord> proposals) {
  for (const ProposalRecord& r : proposals) {
    write_label_fields(out, r.frame_id, r.proposal.box, r.proposal.confidence);
    out << ' ' << origin_name(r.proposal.origin) << '\n';
  }
}

std::vector<ProposalRecord> load_proposals(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  return read_proposals(in);
}

std::string frame_stem(std::int64_t frame_id) {
  std::array<char, 32> buf{};
  std::snprintf(buf.data(), buf.size(), "%06lld", static_cast<long long>(frame_id));
  return buf.data();
}

FrameBundle frame_bundle(const std::filesystem::path& root, std::int64_t frame_id) {
  const std::string stem = frame_stem(frame_id);
  return {root / "points" / (stem + ".bin"), root / "labels" / (stem + ".txt"), frame_id};
}

std::vector<FrameBundle> list_frames(const std::filesystem::path& root) {
  std::vector<FrameBundle> out;
  const auto dir = root / "points";
  if (!std::filesystem::is_directory(dir)) throw FormatError("no points/ directory under " + root.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".bin") continue;
    const std::string stem = entry.path().stem().string();
    long long id = 0;
    try {
      id = parse_integer(stem);
    } catch (const FormatError&) {
      continue;
    }
    out.push_back(frame_bundle(root, id));
  }
  std::sort(out.begin(), out.end(), [](const FrameBundle& a, const FrameBundle& b) { return a.frame_id < b.frame_id; });
  return out;
}

}  // namespace plr
