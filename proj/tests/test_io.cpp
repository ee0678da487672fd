#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "plrefine/config.hpp"
#include "plrefine/error.hpp"
#include "plrefine/io.hpp"
#include "plrefine/text.hpp"
#include "support/oracles.hpp"

using namespace plr;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("plrefine_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> f32_le(std::initializer_list<float> values) {
  std::vector<unsigned char> out;
  for (float v : values) {
    std::uint32_t u = 0;
    std::memcpy(&u, &v, 4);
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>(u >> (8 * k)));
  }
  return out;
}

}  // namespace

TEST(Text, RealsRoundTripExactly) {
  RandomState rng(51);
  for (int i = 0; i < 10000; ++i) {
    const double v = std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(rng.index(80)) - 40);
    EXPECT_EQ(parse_real(format_real(v)), v);
  }
  EXPECT_EQ(format_real(0.5), "0.5");
  EXPECT_EQ(format_real(100.0), "100");
}

TEST(Text, ParseErrors) {
  EXPECT_THROW(parse_real("1.5x"), FormatError);
  EXPECT_THROW(parse_real(""), FormatError);
  EXPECT_THROW(parse_real("nan"), DataError);
  EXPECT_THROW(parse_real("inf"), DataError);
  EXPECT_THROW(parse_integer("12.0"), FormatError);
  EXPECT_EQ(parse_integer("-42"), -42);
}

TEST(Text, Splitting) {
  EXPECT_EQ(split("a,,b", ','), (std::vector<std::string>{"a", "", "b"}));
  EXPECT_EQ(split_whitespace("  a \t b  c\r"), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(PointCloudFile, EmptyFileIsEmptyCloud) {
  TempDir dir;
  write_bytes(dir.path() / "e.bin", {});
  EXPECT_TRUE(load_point_cloud(dir.path() / "e.bin").empty());
}

TEST(PointCloudFile, ByteLayout) {
  TempDir dir;
  write_bytes(dir.path() / "one.bin", f32_le({1.0f, 2.0f, 3.0f, 0.5f}));
  const PointCloud c = load_point_cloud(dir.path() / "one.bin");
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0], (LidarPoint{1.0, 2.0, 3.0, 0.5}));

  store_point_cloud(dir.path() / "out.bin", c);
  std::ifstream in(dir.path() / "out.bin", std::ios::binary);
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(bytes, f32_le({1.0f, 2.0f, 3.0f, 0.5f}));
}

TEST(PointCloudFile, RejectsBadFiles) {
  TempDir dir;
  write_bytes(dir.path() / "short.bin", {1, 2, 3});
  EXPECT_THROW(load_point_cloud(dir.path() / "short.bin"), FormatError);
  write_bytes(dir.path() / "nan.bin", f32_le({1.0f, std::numeric_limits<float>::quiet_NaN(), 0.0f, 0.0f}));
  EXPECT_THROW(load_point_cloud(dir.path() / "nan.bin"), DataError);
}

TEST(PointCloudFile, RoundTripIsBitIdentical) {
  TempDir dir;
  RandomState rng(52);
  PointCloud cloud;
  for (int i = 0; i < 10000; ++i) {
    cloud.push_back({static_cast<float>(rng.uniform(-80, 80)), static_cast<float>(rng.uniform(-80, 80)),
                     static_cast<float>(rng.uniform(-3, 3)), static_cast<float>(rng.uniform())});
  }
  store_point_cloud(dir.path() / "c.bin", cloud);
  EXPECT_EQ(load_point_cloud(dir.path() / "c.bin"), cloud);
}

TEST(LabelFile, EmptyAndComments) {
  std::istringstream in("# header\n\n   \n");
  EXPECT_TRUE(read_labels(in).empty());
}

TEST(LabelFile, SingleRecord) {
  std::istringstream in("7 Pedestrian 1.5 -2 0.9 0.8 0.6 1.73 0.25 0.75\n");
  const auto labels = read_labels(in);
  ASSERT_EQ(labels.size(), 1u);
  EXPECT_EQ(labels[0].frame_id, 7);
  EXPECT_EQ(labels[0].box, Box3D({1.5, -2, 0.9}, {0.8, 0.6, 1.73}, 0.25, Category::Pedestrian));
  EXPECT_EQ(labels[0].confidence, 0.75);
  std::ostringstream out;
  write_labels(out, labels);
  EXPECT_EQ(out.str(), "7 Pedestrian 1.5 -2 0.90000000000000002 0.80000000000000004 0.59999999999999998 1.73 0.25 0.75\n");
}

TEST(LabelFile, RandomRoundTripIsBitIdentical) {
  TempDir dir;
  RandomState rng(53);
  std::vector<LabelRecord> labels;
  for (int i = 0; i < 1000; ++i) {
    labels.push_back({static_cast<std::int64_t>(rng.index(100)), oracle::random_box(rng, 60.0), rng.uniform()});
  }
  store_labels(dir.path() / "l.txt", labels);
  EXPECT_EQ(load_labels(dir.path() / "l.txt"), labels);
}

TEST(LabelFile, RejectsBadRecords) {
  std::istringstream few("0 Car 1 2 3\n");
  EXPECT_THROW(read_labels(few), FormatError);
  std::istringstream junk("0 Car 1 2 3 4 5 6 0 zz\n");
  EXPECT_THROW(read_labels(junk), FormatError);
  std::istringstream bad_conf("0 Car 1 2 3 4 5 6 0 1.5\n");
  EXPECT_THROW(read_labels(bad_conf), DataError);
  std::istringstream bad_size("0 Car 1 2 3 -4 5 6 0 0.5\n");
  EXPECT_THROW(read_labels(bad_size), DataError);
  std::istringstream bad_cat("0 Truck 1 2 3 4 5 6 0 0.5\n");
  EXPECT_THROW(read_labels(bad_cat), DataError);
}

TEST(ProposalFile, OriginColumnRoundTrip) {
  const Box3D b({1, 2, 3}, {4, 2, 1.5}, 0.5, Category::Cyclist);
  const std::vector<ProposalRecord> props{{3, Proposal(b, 0.5, ProposalOrigin::Interpolated)},
                                          {3, Proposal(b, 0.25, ProposalOrigin::Extrapolated)},
                                          {4, Proposal(b, 1.0)}};
  std::stringstream ss;
  write_proposals(ss, props);
  const auto back = read_proposals(ss);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back[i].frame_id, props[i].frame_id);
    EXPECT_EQ(back[i].proposal, props[i].proposal);
  }
  std::istringstream plain("1 Car 0 0 0 1 1 1 0 0.5\n");
  EXPECT_EQ(read_proposals(plain).at(0).proposal.origin, ProposalOrigin::Basic);
  std::istringstream bad("1 Car 0 0 0 1 1 1 0 0.5 sideways\n");
  EXPECT_THROW(read_proposals(bad), DataError);
}

TEST(Dataset, LayoutAndListing) {
  TempDir dir;
  fs::create_directories(dir.path() / "points");
  for (std::int64_t id : {12, 3, 7}) store_point_cloud(frame_bundle(dir.path(), id).points, PointCloud{});
  write_bytes(dir.path() / "points" / "notes.bin", {});
  const auto frames = list_frames(dir.path());
  ASSERT_EQ(frames.size(), 3u);
  EXPECT_EQ(frames[0].frame_id, 3);
  EXPECT_EQ(frames[2].points, dir.path() / "points" / "000012.bin");
  EXPECT_EQ(frames[2].labels, dir.path() / "labels" / "000012.txt");
  EXPECT_EQ(frame_stem(42), "000042");
  EXPECT_THROW(list_frames(dir.path() / "missing"), FormatError);
}

TEST(Config, DefaultsRoundTripThroughJson) {
  const SelfTrainConfig defaults;
  const SelfTrainConfig back = config_from_json(config_to_json(defaults));
  EXPECT_EQ(config_to_json(back).dump(), config_to_json(defaults).dump());
  EXPECT_EQ(back.update_period, 2u);
  EXPECT_EQ(back.source_scene.points[0].mean, 300.0);
}

TEST(Config, PartialOverridesKeepDefaults) {
  const auto j = nlohmann::ordered_json::parse(
      R"({"seed": 9, "epochs": 4, "oracle": {"miss_rate": 0.5},
          "target_scene": {"instances": {"car": 2}, "points": {"cyclist": {"mean": 3}}},
          "run": {"command": "selftrain"}})");
  const SelfTrainConfig c = config_from_json(j);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.epochs, 4u);
  EXPECT_EQ(c.oracle.miss_rate, 0.5);
  EXPECT_EQ(c.oracle.center_noise, OracleConfig{}.center_noise);
  EXPECT_EQ(c.target_scene.instances[0], 2u);
  EXPECT_EQ(c.target_scene.instances[1], 3u);
  EXPECT_EQ(c.target_scene.points[2].mean, 3.0);
  EXPECT_EQ(c.target_scene.points[2].stddev, 8.0);
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  using J = nlohmann::ordered_json;
  EXPECT_THROW(config_from_json(J::parse(R"({"epoch": 3})")), FormatError);
  EXPECT_THROW(config_from_json(J::parse(R"({"oracle": {"miss": 0.1}})")), FormatError);
  EXPECT_THROW(config_from_json(J::parse(R"({"epochs": "three"})")), FormatError);
  EXPECT_THROW(config_from_json(J::parse(R"({"epochs": -3})")), FormatError);
  EXPECT_THROW(config_from_json(J::parse(R"({"toggles": {"alignment": 1}})")), FormatError);
  EXPECT_THROW(config_from_json(J::parse(R"([1, 2])")), FormatError);
}

TEST(Config, RejectsOutOfRangeValues) {
  using J = nlohmann::ordered_json;
  EXPECT_THROW(config_from_json(J::parse(R"({"t_neg": 0.7, "t_pos": 0.6})")), InvalidArgument);
  EXPECT_THROW(config_from_json(J::parse(R"({"update_period": 0})")), InvalidArgument);
  EXPECT_THROW(config_from_json(J::parse(R"({"ie": {"lambda": 1.0}})")), InvalidArgument);
  EXPECT_THROW(config_from_json(J::parse(R"({"oracle": {"miss_rate": 2}})")), InvalidArgument);
  EXPECT_THROW(config_from_json(J::parse(R"({"features": {"dimension": 2}})")), InvalidArgument);
}

TEST(Config, ManifestLoadsBack) {
  TempDir dir;
  SelfTrainConfig c;
  c.seed = 77;
  c.toggles.alignment = false;
  store_manifest(dir.path() / "m.json", c, {{"command", "test"}});
  const SelfTrainConfig back = load_config(dir.path() / "m.json");
  EXPECT_EQ(config_to_json(back).dump(), config_to_json(c).dump());
  std::ofstream(dir.path() / "broken.json") << "{ not json";
  EXPECT_THROW(load_config(dir.path() / "broken.json"), FormatError);
}
