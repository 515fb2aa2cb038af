#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wmdrive/geometry.hpp"

namespace wmdrive {

enum class SemanticClass : int { kFree = 0, kBoundary = 1, kVehicle = 2, kPedestrian = 3 };
inline constexpr int kNumClasses = 4;

enum class MapTemplate : int { kStraight = 0, kLeftCurve = 1, kRightCurve = 2, kSCurve = 3 };

std::string to_string(MapTemplate t);
MapTemplate map_template_from_string(const std::string& s);

struct SensorConfig {
  int num_rays{64};
  double fov_deg{120.0};
  double max_range{50.0};

  double ray_angle(int k) const;  // relative to heading; ray num_rays/2 points straight ahead
  friend bool operator==(const SensorConfig&, const SensorConfig&) = default;
};

struct VehicleParams {
  double length{4.6};
  double width{1.9};
  double wheelbase{2.8};
  double max_steer{0.6};
  friend bool operator==(const VehicleParams&, const VehicleParams&) = default;
};

struct ScenarioParams {
  SensorConfig sensor;
  VehicleParams ego;
  int history_frames{5};
  int horizon{8};
  double frame_dt{0.5};
  int substeps{10};
  std::vector<MapTemplate> templates{MapTemplate::kStraight, MapTemplate::kLeftCurve,
                                     MapTemplate::kRightCurve, MapTemplate::kSCurve};
  double road_half_width{4.5};
  double min_speed{6.0};
  double max_speed{12.0};
  double lead_probability{0.5};
  int max_parked{2};
  int max_pedestrians{2};
  int max_retries{32};

  /// Throws ConfigError on invalid values.
  void validate() const;
};

struct RoadMap {
  MapTemplate kind{MapTemplate::kStraight};
  std::vector<Vec2> centerline;               // route, meters
  std::vector<std::vector<Vec2>> drivable;    // polygon set
  std::vector<Segment> boundary;              // sensed road edges

  Vec2 bbox_min() const;
  Vec2 bbox_max() const;
  bool inside(Vec2 p) const;
  bool inside(const OrientedBox& box) const;
  /// Arc length of the closest centerline point.
  double progress(Vec2 p) const;
  friend bool operator==(const RoadMap&, const RoadMap&) = default;
};

enum class AgentKind : int { kVehicle = 0, kPedestrian = 1 };

/// Scripted, non-reactive traffic participant. Vehicles are oriented boxes,
/// pedestrians are discs. schedule[f] is the pose at scenario frame f.
struct Agent {
  AgentKind kind{AgentKind::kVehicle};
  double length{4.5};
  double width{1.9};
  double radius{0.3};
  std::vector<Pose2D> schedule;

  /// Linear interpolation at a fractional frame index, clamped to the schedule.
  Pose2D pose_at(double frame) const;
  OrientedBox box_at(double frame) const;
  Disc disc_at(double frame) const;
  SemanticClass semantic_class() const;
  friend bool operator==(const Agent&, const Agent&) = default;
};

struct HistoryFrame {
  Pose2D pose;
  RelativeMovement movement;  // from the previous frame into this one
  friend bool operator==(const HistoryFrame&, const HistoryFrame&) = default;
};

/// H future waypoints in the current ego frame.
struct Trajectory {
  std::vector<Vec2> waypoints;

  std::vector<double> flatten() const;
  static Trajectory from_flat(const std::vector<double>& flat);
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Scenario frames are indexed 0..history+horizon-1; frame history-1 is "now".
struct Scenario {
  std::uint64_t seed{0};
  double frame_dt{0.5};
  int substeps{10};
  SensorConfig sensor;
  VehicleParams ego;
  RoadMap map;
  Pose2D ego_init;
  double ego_speed{0.0};
  std::vector<Agent> agents;
  std::vector<HistoryFrame> history;
  Trajectory expert_future;
  std::vector<Pose2D> expert_poses;  // global poses matching expert_future

  int horizon() const { return static_cast<int>(expert_future.waypoints.size()); }
  int current_frame() const { return static_cast<int>(history.size()) - 1; }
  int num_frames() const { return static_cast<int>(history.size()) + horizon(); }
  /// Ego pose at any logged frame (history followed by expert future).
  Pose2D logged_pose(int frame) const;
  OrientedBox ego_box(const Pose2D& pose) const { return {pose, ego.length, ego.width}; }
  friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct Observation {
  std::vector<double> ranges;     // K, meters, in (0, max_range]
  std::vector<double> semantics;  // K x kNumClasses one-hot, row-major

  int num_rays() const { return static_cast<int>(ranges.size()); }
  SemanticClass class_of(int ray) const;
  friend bool operator==(const Observation&, const Observation&) = default;
};

struct RolloutResult {
  Pose2D origin;
  std::vector<Pose2D> realized;       // H, global
  std::vector<double> speeds;         // H + 1, index 0 is the initial speed
  bool collided{false};
  int first_collision_frame{0};       // 1..H when collided
  int offroad_frames{0};
  std::vector<double> accel;          // H, m/s^2
  std::vector<double> jerk;           // H - 1, m/s^3
  std::vector<Pose2D> substep_poses;  // H * substeps + 1

  std::vector<Vec2> realized_local() const;
};

/// Waypoint tracker constants. Not part of the scenario file.
struct TrackerParams {
  double lookahead_time{0.8};
  double min_lookahead{2.0};
  double speed_gain{2.0};
  double position_gain{1.0};
  double max_accel{4.0};
  double max_brake{8.0};
};

Scenario build_scenario(std::uint64_t seed, const ScenarioParams& params);

/// Ray-cast scan from `pose` against road edges and agents at `frame`.
Observation sense(const Scenario& scenario, const Pose2D& pose, int frame);

RolloutResult rollout_controller(const Scenario& scenario, const Trajectory& traj,
                                 const TrackerParams& tracker = {});

/// exp(-ADE) between realized positions and expert waypoints.
double reward(const RolloutResult& result, const Trajectory& expert);

double average_displacement(const RolloutResult& result, const Trajectory& expert);

// Scene checks shared by scenario validation and evaluation.
struct ComfortLimits {
  double max_accel{4.0};
  double max_jerk{8.0};
};

bool collides_at(const Scenario& scenario, const Pose2D& ego_pose, double frame);
bool ttc_ok(const Scenario& scenario, const RolloutResult& result, double min_ttc = 1.0);
bool comfort_ok(const RolloutResult& result, const ComfortLimits& limits = {});
double progress_ratio(const Scenario& scenario, const RolloutResult& result);
double drivable_fraction(const Scenario& scenario, const RolloutResult& result);

}  // namespace wmdrive
