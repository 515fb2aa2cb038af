#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

namespace wmdrive {

struct Vec2 {
  double x{0.0};
  double y{0.0};

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Wraps an angle into (-pi, pi].
double normalize_angle(double a);

struct Pose2D {
  double x{0.0};
  double y{0.0};
  double yaw{0.0};

  Vec2 position() const { return {x, y}; }
  friend bool operator==(const Pose2D&, const Pose2D&) = default;
};

/// Ego motion between two consecutive frames, expressed in the earlier frame.
struct RelativeMovement {
  double dx{0.0};
  double dy{0.0};
  double dyaw{0.0};

  friend bool operator==(const RelativeMovement&, const RelativeMovement&) = default;
};

RelativeMovement relative_movement(const Pose2D& from, const Pose2D& to);
Pose2D compose(const Pose2D& pose, const RelativeMovement& m);

Vec2 to_local(const Pose2D& frame, Vec2 p);
Vec2 to_global(const Pose2D& frame, Vec2 p);

struct OrientedBox {
  Pose2D center;
  double length{4.5};
  double width{1.9};

  std::array<Vec2, 4> corners() const;
};

struct Disc {
  Vec2 center;
  double radius{0.3};
};

struct Segment {
  Vec2 a;
  Vec2 b;
  friend bool operator==(const Segment&, const Segment&) = default;
};

// Ray queries return the distance along a unit direction to the first hit at
// distance >= 0, if any.
std::optional<double> ray_segment(Vec2 origin, Vec2 dir, const Segment& s);
std::optional<double> ray_box(Vec2 origin, Vec2 dir, const OrientedBox& box);
std::optional<double> ray_disc(Vec2 origin, Vec2 dir, const Disc& disc);

bool overlaps(const OrientedBox& a, const OrientedBox& b);
bool overlaps(const OrientedBox& a, const Disc& d);

bool point_in_polygon(Vec2 p, std::span<const Vec2> polygon);

}  // namespace wmdrive
