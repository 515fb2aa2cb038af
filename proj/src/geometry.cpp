#include "wmdrive/geometry.hpp"

#include <algorithm>
#include <limits>

namespace wmdrive {

double normalize_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a, kTwoPi);
  if (a > std::numbers::pi) a -= kTwoPi;
  if (a <= -std::numbers::pi) a += kTwoPi;
  return a;
}

RelativeMovement relative_movement(const Pose2D& from, const Pose2D& to) {
  const Vec2 d = to_local(from, to.position());
  return {d.x, d.y, normalize_angle(to.yaw - from.yaw)};
}

Pose2D compose(const Pose2D& pose, const RelativeMovement& m) {
  const Vec2 p = to_global(pose, {m.dx, m.dy});
  return {p.x, p.y, normalize_angle(pose.yaw + m.dyaw)};
}

Vec2 to_local(const Pose2D& frame, Vec2 p) {
  const double c = std::cos(frame.yaw);
  const double s = std::sin(frame.yaw);
  const double dx = p.x - frame.x;
  const double dy = p.y - frame.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

Vec2 to_global(const Pose2D& frame, Vec2 p) {
  const double c = std::cos(frame.yaw);
  const double s = std::sin(frame.yaw);
  return {frame.x + c * p.x - s * p.y, frame.y + s * p.x + c * p.y};
}

std::array<Vec2, 4> OrientedBox::corners() const {
  const double hl = 0.5 * length;
  const double hw = 0.5 * width;
  return {to_global(center, {hl, hw}), to_global(center, {-hl, hw}),
          to_global(center, {-hl, -hw}), to_global(center, {hl, -hw})};
}

std::optional<double> ray_segment(Vec2 origin, Vec2 dir, const Segment& s) {
  const Vec2 e = s.b - s.a;
  const double denom = cross(dir, e);
  if (std::abs(denom) < 1e-15) return std::nullopt;  // parallel
  const Vec2 w = s.a - origin;
  const double t = cross(w, e) / denom;
  const double u = cross(w, dir) / denom;
  if (t < 0.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return t;
}

std::optional<double> ray_box(Vec2 origin, Vec2 dir, const OrientedBox& box) {
  const auto c = box.corners();
  std::optional<double> best;
  for (std::size_t i = 0; i < 4; ++i) {
    auto t = ray_segment(origin, dir, {c[i], c[(i + 1) % 4]});
    if (t && (!best || *t < *best)) best = t;
  }
  return best;
}

std::optional<double> ray_disc(Vec2 origin, Vec2 dir, const Disc& disc) {
  const Vec2 rel = disc.center - origin;
  const double proj = dot(rel, dir);
  const double perp2 = dot(rel, rel) - proj * proj;
  const double r2 = disc.radius * disc.radius;
  if (perp2 > r2) return std::nullopt;
  const double half = std::sqrt(std::max(0.0, r2 - perp2));
  double t = proj - half;
  if (t < 0.0) t = proj + half;
  if (t < 0.0) return std::nullopt;
  return t;
}

namespace {

void project(const std::array<Vec2, 4>& pts, Vec2 axis, double& lo, double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (const auto& p : pts) {
    const double v = dot(p, axis);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
}

}  // namespace

bool overlaps(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<Vec2, 4> axes = {
      Vec2{std::cos(a.center.yaw), std::sin(a.center.yaw)},
      Vec2{-std::sin(a.center.yaw), std::cos(a.center.yaw)},
      Vec2{std::cos(b.center.yaw), std::sin(b.center.yaw)},
      Vec2{-std::sin(b.center.yaw), std::cos(b.center.yaw)}};
  for (const auto& ax : axes) {
    double alo, ahi, blo, bhi;
    project(ca, ax, alo, ahi);
    project(cb, ax, blo, bhi);
    if (ahi < blo || bhi < alo) return false;
  }
  return true;
}

bool overlaps(const OrientedBox& a, const Disc& d) {
  const Vec2 local = to_local(a.center, d.center);
  const double cx = std::clamp(local.x, -0.5 * a.length, 0.5 * a.length);
  const double cy = std::clamp(local.y, -0.5 * a.width, 0.5 * a.width);
  const double dx = local.x - cx;
  const double dy = local.y - cy;
  return dx * dx + dy * dy <= d.radius * d.radius;
}

bool point_in_polygon(Vec2 p, std::span<const Vec2> polygon) {
  bool inside = false;
  const std::size_t n = polygon.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = polygon[i];
    const Vec2 b = polygon[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xint = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < xint) inside = !inside;
    }
  }
  return inside;
}

}  // namespace wmdrive
