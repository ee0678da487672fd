#include "plrefine/geometry.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "plrefine/error.hpp"

namespace plr {
namespace {

struct Vec2 {
  double x;
  double y;
};

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Small fixed-capacity polygon; clipping a quad by a quad never exceeds 8 vertices.
struct Polygon {
  std::array<Vec2, 16> v;
  std::size_t n = 0;
  void push(const Vec2& p) { v[n++] = p; }
};

// Footprint corners in counter-clockwise order.
Polygon footprint(const Box3D& b) {
  const double c = std::cos(b.heading());
  const double s = std::sin(b.heading());
  const double hl = 0.5 * b.size().length;
  const double hw = 0.5 * b.size().width;
  constexpr std::array<std::array<double, 2>, 4> signs{{{1, 1}, {-1, 1}, {-1, -1}, {1, -1}}};
  Polygon poly;
  for (const auto& [sl, sw] : signs) {
    const double lx = sl * hl;
    const double ly = sw * hw;
    poly.push({b.center().x + c * lx - s * ly, b.center().y + s * lx + c * ly});
  }
  return poly;
}

double shoelace(const Polygon& p) {
  double twice = 0.0;
  for (std::size_t i = 0; i < p.n; ++i) {
    const Vec2& a = p.v[i];
    const Vec2& b = p.v[(i + 1) % p.n];
    twice += a.x * b.y - b.x * a.y;
  }
  return 0.5 * std::abs(twice);
}

// Sutherland-Hodgman: clip `subject` against every edge of the convex CCW `clip`.
Polygon clip_polygon(const Polygon& subject, const Polygon& clip) {
  Polygon out = subject;
  for (std::size_t e = 0; e < clip.n && out.n > 0; ++e) {
    const Vec2& p = clip.v[e];
    const Vec2& q = clip.v[(e + 1) % clip.n];
    const Polygon in = out;
    out.n = 0;
    for (std::size_t i = 0; i < in.n; ++i) {
      const Vec2& cur = in.v[i];
      const Vec2& prev = in.v[(i + in.n - 1) % in.n];
      const double dc = cross(p, q, cur);
      const double dp = cross(p, q, prev);
      if (dc >= 0.0) {
        if (dp < 0.0) {
          const double t = dp / (dp - dc);
          out.push({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
        }
        out.push(cur);
      } else if (dp >= 0.0) {
        const double t = dp / (dp - dc);
        out.push({prev.x + t * (cur.x - prev.x), prev.y + t * (cur.y - prev.y)});
      }
    }
  }
  return out;
}

// Footprints whose circumscribed circles are apart cannot intersect.
bool footprints_far_apart(const Box3D& a, const Box3D& b) {
  const double dx = a.center().x - b.center().x;
  const double dy = a.center().y - b.center().y;
  const double ra = 0.5 * std::hypot(a.size().length, a.size().width);
  const double rb = 0.5 * std::hypot(b.size().length, b.size().width);
  const double r = ra + rb;
  return dx * dx + dy * dy > r * r;
}

bool finite_point(const LidarPoint& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z) && std::isfinite(p.intensity);
}

// Rotation by -heading, i.e. the row-vector product with rotation_matrix(heading).
struct LocalFrame {
  explicit LocalFrame(const Box3D& b)
      : origin(b.center()), c(std::cos(b.heading())), s(std::sin(b.heading())) {}

  Vec3 to_local(const Vec3& p) const {
    const double dx = p.x - origin.x;
    const double dy = p.y - origin.y;
    return {dx * c + dy * s, -dx * s + dy * c, p.z - origin.z};
  }

  Vec3 origin;
  double c;
  double s;
};

bool within_half_extents(const Vec3& local, const Size3& size) {
  return std::abs(local.x) <= 0.5 * size.length + kContainmentTolerance &&
         std::abs(local.y) <= 0.5 * size.width + kContainmentTolerance &&
         std::abs(local.z) <= 0.5 * size.height + kContainmentTolerance;
}

}  // namespace

bool is_finite(const Vec3& v) { return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z); }

double norm(const Vec3& v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }

std::string category_name(Category c) {
  switch (c) {
    case Category::Car:
      return "Car";
    case Category::Pedestrian:
      return "Pedestrian";
    case Category::Cyclist:
      return "Cyclist";
  }
  return std::to_string(static_cast<unsigned>(c));
}

Category parse_category(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  if (lower == "car") return Category::Car;
  if (lower == "pedestrian") return Category::Pedestrian;
  if (lower == "cyclist") return Category::Cyclist;
  unsigned id = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), id);
  if (ec != std::errc() || end != text.data() + text.size() || id > 255) {
    throw DataError("unknown category '" + std::string(text) + "'");
  }
  return static_cast<Category>(id);
}

double normalize_heading(double theta) {
  if (!std::isfinite(theta)) throw InvalidArgument("heading must be finite");
  double r = std::remainder(theta, 2.0 * std::numbers::pi);
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

Box3D::Box3D(const Vec3& center, const Size3& size, double heading, Category category)
    : center_(center), size_(size), heading_(0.0), category_(category) {
  if (!is_finite(center)) throw InvalidArgument("box center must be finite");
  if (!(size.length > 0.0) || !(size.width > 0.0) || !(size.height > 0.0) || !std::isfinite(size.length) ||
      !std::isfinite(size.width) || !std::isfinite(size.height)) {
    throw DegenerateBox("box size components must be finite and > 0");
  }
  heading_ = normalize_heading(heading);
}

Box3D Box3D::with_center(const Vec3& center) const {
  Box3D out = *this;
  if (!is_finite(center)) throw InvalidArgument("box center must be finite");
  out.center_ = center;
  return out;
}

PointCloud::PointCloud(std::vector<LidarPoint> points) : points_(std::move(points)) {
  for (const auto& p : points_) {
    if (!finite_point(p)) throw InvalidArgument("point cloud values must be finite");
  }
}

void PointCloud::push_back(const LidarPoint& p) {
  if (!finite_point(p)) throw InvalidArgument("point cloud values must be finite");
  points_.push_back(p);
}

Mat3 rotation_matrix(double theta) {
  if (!std::isfinite(theta)) throw InvalidArgument("rotation_matrix: theta must be finite");
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {{{c, -s, 0.0}, {s, c, 0.0}, {0.0, 0.0, 1.0}}};
}

Vec3 ego_to_local(const Vec3& p, const Box3D& box) {
  const Mat3 m = rotation_matrix(box.heading());
  const Vec3 d = p - box.center();
  return {d.x * m[0][0] + d.y * m[1][0] + d.z * m[2][0], d.x * m[0][1] + d.y * m[1][1] + d.z * m[2][1],
          d.x * m[0][2] + d.y * m[1][2] + d.z * m[2][2]};
}

Vec3 local_to_ego_scaled(const Vec3& p_local, const Size3& src_size, const Box3D& dst) {
  if (!(src_size.length > 0.0) || !(src_size.width > 0.0) || !(src_size.height > 0.0)) {
    throw DegenerateBox("local_to_ego_scaled: source size components must be > 0");
  }
  const Vec3 s{dst.size().length / src_size.length * p_local.x, dst.size().width / src_size.width * p_local.y,
               dst.size().height / src_size.height * p_local.z};
  const Mat3 m = rotation_matrix(dst.heading());
  // Row vector times M^T: component j is sum_i s_i * M[j][i].
  return {s.x * m[0][0] + s.y * m[0][1] + s.z * m[0][2] + dst.center().x,
          s.x * m[1][0] + s.y * m[1][1] + s.z * m[1][2] + dst.center().y,
          s.x * m[2][0] + s.y * m[2][1] + s.z * m[2][2] + dst.center().z};
}

bool contains(const Box3D& box, const Vec3& p) { return within_half_extents(ego_to_local(p, box), box.size()); }

std::vector<std::size_t> points_in_box(const PointCloud& cloud, const Box3D& box) {
  const LocalFrame frame(box);
  const double reach = 0.5 * std::hypot(box.size().length, box.size().width) + kContainmentTolerance;
  std::vector<std::size_t> inside;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const LidarPoint& p = cloud[i];
    const double dx = p.x - frame.origin.x;
    const double dy = p.y - frame.origin.y;
    if (std::abs(dx) > reach || std::abs(dy) > reach) continue;
    if (within_half_extents(frame.to_local(p.position()), box.size())) inside.push_back(i);
  }
  return inside;
}

double bev_intersection_area(const Box3D& a, const Box3D& b) {
  if (footprints_far_apart(a, b)) return 0.0;
  const double area = shoelace(clip_polygon(footprint(a), footprint(b)));
  return area < 1e-12 ? 0.0 : std::min({area, a.bev_area(), b.bev_area()});
}

double iou_bev(const Box3D& a, const Box3D& b) {
  const double inter = bev_intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  return std::clamp(inter / (a.bev_area() + b.bev_area() - inter), 0.0, 1.0);
}

double iou_3d(const Box3D& a, const Box3D& b) {
  const double dz = std::min(a.z_max(), b.z_max()) - std::max(a.z_min(), b.z_min());
  if (dz <= 0.0) return 0.0;
  const double inter = bev_intersection_area(a, b) * std::min({dz, a.size().height, b.size().height});
  if (inter == 0.0) return 0.0;
  return std::clamp(inter / (a.volume() + b.volume() - inter), 0.0, 1.0);
}

double iou(const Box3D& a, const Box3D& b, IouKind kind) {
  return kind == IouKind::ThreeD ? iou_3d(a, b) : iou_bev(a, b);
}

std::vector<std::size_t> nms(std::span<const Box3D> boxes, std::span<const double> scores, double iou_threshold,
                             IouKind kind) {
  if (boxes.size() != scores.size()) throw InvalidArgument("nms: boxes and scores differ in length");
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) throw InvalidArgument("nms: threshold outside [0, 1]");
  for (double s : scores) {
    if (!std::isfinite(s)) throw InvalidArgument("nms: scores must be finite");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return scores[l] > scores[r]; });

  std::vector<std::size_t> kept;
  for (std::size_t idx : order) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return iou(boxes[idx], boxes[k], kind) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

}  // namespace plr
