#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace plr {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Vec3&, const Vec3&) = default;
  friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
};

bool is_finite(const Vec3& v);
double norm(const Vec3& v);

// Row-major 3x3.
using Mat3 = std::array<std::array<double, 3>, 3>;

// Object class id. The three named values are the ones the tooling knows
// about; other ids round-trip through files as plain integers.
enum class Category : std::uint8_t { Car = 0, Pedestrian = 1, Cyclist = 2 };

inline constexpr std::array<Category, 3> kKnownCategories{Category::Car, Category::Pedestrian,
                                                          Category::Cyclist};

std::string category_name(Category c);
// Accepts "Car"/"Pedestrian"/"Cyclist" (any case) or a decimal id. Throws DataError.
Category parse_category(std::string_view text);

struct Size3 {
  double length = 0.0;  // along the heading direction
  double width = 0.0;
  double height = 0.0;

  friend bool operator==(const Size3&, const Size3&) = default;
};

// Maps any finite angle into (-pi, pi]. Angles already in range are returned bit-identical.
double normalize_heading(double theta);

// Upright oriented box. Size components are strictly positive and the heading
// is normalized on construction, so every Box3D value is valid.
class Box3D {
 public:
  // Throws DegenerateBox for non-positive or non-finite sizes and
  // InvalidArgument for a non-finite center or heading.
  Box3D(const Vec3& center, const Size3& size, double heading, Category category = Category::Car);

  const Vec3& center() const { return center_; }
  const Size3& size() const { return size_; }
  double heading() const { return heading_; }
  Category category() const { return category_; }

  // Copy with a new center; size, heading and category are carried over bit-for-bit.
  Box3D with_center(const Vec3& center) const;

  double volume() const { return size_.length * size_.width * size_.height; }
  double bev_area() const { return size_.length * size_.width; }
  double z_min() const { return center_.z - 0.5 * size_.height; }
  double z_max() const { return center_.z + 0.5 * size_.height; }

  friend bool operator==(const Box3D&, const Box3D&) = default;

 private:
  Vec3 center_;
  Size3 size_;
  double heading_;
  Category category_;
};

struct LidarPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double intensity = 0.0;

  Vec3 position() const { return {x, y, z}; }
  friend bool operator==(const LidarPoint&, const LidarPoint&) = default;
};

// Frame-local point records. All values are finite.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<LidarPoint> points);  // throws InvalidArgument on non-finite values

  void push_back(const LidarPoint& p);
  void reserve(std::size_t n) { points_.reserve(n); }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const LidarPoint& operator[](std::size_t i) const { return points_[i]; }
  std::span<const LidarPoint> points() const { return points_; }
  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }

  friend bool operator==(const PointCloud&, const PointCloud&) = default;

 private:
  std::vector<LidarPoint> points_;
};

// Rows [cos, -sin, 0], [sin, cos, 0], [0, 0, 1]. Throws InvalidArgument for non-finite theta.
Mat3 rotation_matrix(double theta);

// (p - center) as a row vector times rotation_matrix(heading).
Vec3 ego_to_local(const Vec3& p, const Box3D& box);

// Scales a point expressed in the local frame of a box of size `src_size` to
// `dst`'s size, then row-multiplies by rotation_matrix(dst.heading)^T and
// adds dst.center. Throws DegenerateBox when a src_size component is <= 0.
Vec3 local_to_ego_scaled(const Vec3& p_local, const Size3& src_size, const Box3D& dst);

// Slack on the half-extents used by containment. Keeps points produced by the
// local/ego transforms inside the box they were generated for despite rounding.
inline constexpr double kContainmentTolerance = 1e-9;

// Closed-interval containment in the box's local frame.
bool contains(const Box3D& box, const Vec3& p);

// Ascending indices of the points contained in `box`.
std::vector<std::size_t> points_in_box(const PointCloud& cloud, const Box3D& box);

// Intersection-over-union of the rotated footprints.
double iou_bev(const Box3D& a, const Box3D& b);
// Footprint intersection times z overlap, over the union volume.
double iou_3d(const Box3D& a, const Box3D& b);

enum class IouKind { ThreeD, Bev };
double iou(const Box3D& a, const Box3D& b, IouKind kind);

// Area of the intersection of two rotated footprints; slivers below 1e-12 m^2 are 0.
double bev_intersection_area(const Box3D& a, const Box3D& b);

// Greedy NMS. Candidates are visited by descending score, ties by lower index;
// a candidate is kept iff its IoU with every kept box is below `iou_threshold`.
// Returns kept indices in visiting order.
std::vector<std::size_t> nms(std::span<const Box3D> boxes, std::span<const double> scores,
                             double iou_threshold, IouKind kind = IouKind::ThreeD);

}  // namespace plr
