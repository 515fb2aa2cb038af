#include "wmdrive/world_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "wmdrive/errors.hpp"
#include "wmdrive/rng.hpp"

namespace wmdrive {

namespace {

constexpr double kMinRange = 1e-6;
constexpr double kRoadLength = 360.0;
constexpr double kRoadStep = 2.0;
constexpr double kStartArc = 40.0;

struct RouteProjection {
  double s{0.0};
  double lateral{0.0};
};

// Arc-length parametrized view of a centerline polyline.
class Route {
 public:
  explicit Route(const std::vector<Vec2>& pts) : pts_(pts), cum_(pts.size(), 0.0) {
    for (std::size_t i = 1; i < pts_.size(); ++i) cum_[i] = cum_[i - 1] + norm(pts_[i] - pts_[i - 1]);
  }

  double length() const { return cum_.empty() ? 0.0 : cum_.back(); }

  Pose2D pose_at(double s) const {
    s = std::clamp(s, 0.0, length());
    auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
    std::size_t i = it == cum_.begin() ? 0 : static_cast<std::size_t>(it - cum_.begin()) - 1;
    i = std::min(i, pts_.size() - 2);
    const Vec2 d = pts_[i + 1] - pts_[i];
    const double seg = norm(d);
    const double u = seg > 0.0 ? (s - cum_[i]) / seg : 0.0;
    const Vec2 p = pts_[i] + u * d;
    return {p.x, p.y, std::atan2(d.y, d.x)};
  }

  RouteProjection project(Vec2 p) const {
    double best = std::numeric_limits<double>::infinity();
    RouteProjection out;
    for (std::size_t i = 0; i + 1 < pts_.size(); ++i) {
      const Vec2 d = pts_[i + 1] - pts_[i];
      const double len2 = dot(d, d);
      const double u = len2 > 0.0 ? std::clamp(dot(p - pts_[i], d) / len2, 0.0, 1.0) : 0.0;
      const Vec2 q = pts_[i] + u * d;
      const double dist = norm(p - q);
      if (dist < best) {
        best = dist;
        out.s = cum_[i] + u * std::sqrt(len2);
        out.lateral = cross(d, p - pts_[i]) >= 0.0 ? dist : -dist;
      }
    }
    return out;
  }

 private:
  std::vector<Vec2> pts_;
  std::vector<double> cum_;
};

struct EgoState {
  Pose2D pose;
  double speed{0.0};
};

void integrate(EgoState& s, double steer, double accel, double dt, double wheelbase) {
  const double v = s.speed;
  s.pose.x += v * std::cos(s.pose.yaw) * dt;
  s.pose.y += v * std::sin(s.pose.yaw) * dt;
  s.pose.yaw = normalize_angle(s.pose.yaw + v / wheelbase * std::tan(steer) * dt);
  s.speed = std::max(0.0, v + accel * dt);
}

double pure_pursuit_steer(const Pose2D& pose, Vec2 target, double wheelbase, double max_steer) {
  const Vec2 local = to_local(pose, target);
  if (local.x <= 0.1) return 0.0;
  const double ld2 = dot(local, local);
  const double steer = std::atan(2.0 * wheelbase * local.y / ld2);
  return std::clamp(steer, -max_steer, max_steer);
}

RoadMap make_road(MapTemplate kind, double half_width, Rng& rng) {
  const double heading0 = uniform(rng, -std::numbers::pi, std::numbers::pi);
  const double curve_start = uniform(rng, 50.0, 130.0);
  const double radius = uniform(rng, 60.0, 150.0);
  const double sweep = uniform(rng, 0.4, 1.1);
  const double arc = sweep * radius;

  auto curvature = [&](double s) {
    const double k = 1.0 / radius;
    switch (kind) {
      case MapTemplate::kStraight:
        return 0.0;
      case MapTemplate::kLeftCurve:
        return (s >= curve_start && s < curve_start + arc) ? k : 0.0;
      case MapTemplate::kRightCurve:
        return (s >= curve_start && s < curve_start + arc) ? -k : 0.0;
      case MapTemplate::kSCurve:
        if (s >= curve_start && s < curve_start + arc) return k;
        if (s >= curve_start + arc && s < curve_start + 2.0 * arc) return -k;
        return 0.0;
    }
    return 0.0;
  };

  RoadMap map;
  map.kind = kind;
  const int n = static_cast<int>(kRoadLength / kRoadStep) + 1;
  Vec2 p{0.0, 0.0};
  double heading = heading0;
  map.centerline.push_back(p);
  for (int i = 1; i < n; ++i) {
    const double s_mid = (i - 0.5) * kRoadStep;
    const double dh = curvature(s_mid) * kRoadStep;
    const double mid_heading = heading + 0.5 * dh;
    p = p + kRoadStep * Vec2{std::cos(mid_heading), std::sin(mid_heading)};
    heading += dh;
    map.centerline.push_back(p);
  }

  std::vector<Vec2> left(n), right(n);
  for (int i = 0; i < n; ++i) {
    const Vec2 a = map.centerline[std::max(0, i - 1)];
    const Vec2 b = map.centerline[std::min(n - 1, i + 1)];
    const Vec2 t = b - a;
    const double len = norm(t);
    const Vec2 normal{-t.y / len, t.x / len};
    left[i] = map.centerline[i] + half_width * normal;
    right[i] = map.centerline[i] - half_width * normal;
  }
  std::vector<Vec2> polygon = left;
  polygon.insert(polygon.end(), right.rbegin(), right.rend());
  map.drivable.push_back(std::move(polygon));
  for (int i = 0; i + 1 < n; ++i) {
    map.boundary.push_back({left[i], left[i + 1]});
    map.boundary.push_back({right[i], right[i + 1]});
  }
  return map;
}

// Agent placement in route coordinates; schedule spans every scenario frame.
Agent make_route_agent(const Route& route, AgentKind kind, double s0, double lateral,
                       double speed, int num_frames, double dt) {
  Agent a;
  a.kind = kind;
  for (int f = 0; f < num_frames; ++f) {
    const Pose2D c = route.pose_at(s0 + speed * f * dt);
    const Vec2 p = to_global(c, {0.0, lateral});
    const double yaw = speed < 0.0 ? normalize_angle(c.yaw + std::numbers::pi) : c.yaw;
    a.schedule.push_back({p.x, p.y, yaw});
  }
  return a;
}

struct ExpertLog {
  std::vector<EgoState> frames;  // index 0 is the pre-roll frame (-1)
  bool ok{true};
};

// Lane-following expert: pure pursuit on the centerline plus IDM speed control
// against in-path agents.
ExpertLog simulate_expert(const Scenario& sc, const Route& route, EgoState start, double desired_speed,
                          int num_frames) {
  constexpr double kIdmAccel = 1.5;
  constexpr double kIdmBrake = 2.0;
  constexpr double kIdmMinGap = 4.0;
  constexpr double kIdmHeadway = 1.5;
  constexpr double kAccelLo = -3.5;
  constexpr double kJerkLimit = 5.0;

  ExpertLog log;
  log.frames.push_back(start);
  EgoState s = start;
  double accel = 0.0;
  const double dt = sc.frame_dt / sc.substeps;
  for (int f = 0; f < num_frames; ++f) {
    for (int k = 0; k < sc.substeps; ++k) {
      const double frame_time = (f - 1) + static_cast<double>(k) / sc.substeps;
      const RouteProjection ego = route.project(s.pose.position());
      double gap = std::numeric_limits<double>::infinity();
      double lead_speed = 0.0;
      for (const auto& ag : sc.agents) {
        const Pose2D ap = ag.pose_at(std::max(0.0, frame_time));
        const RouteProjection pr = route.project(ap.position());
        const double half_w = ag.kind == AgentKind::kVehicle ? 0.5 * ag.width : ag.radius;
        const double half_l = ag.kind == AgentKind::kVehicle ? 0.5 * ag.length : ag.radius;
        if (pr.s <= ego.s) continue;
        if (std::abs(pr.lateral - ego.lateral) > 0.5 * sc.ego.width + half_w + 0.4) continue;
        const double g = pr.s - ego.s - 0.5 * sc.ego.length - half_l;
        if (g < gap) {
          gap = g;
          const Pose2D nxt = ag.pose_at(std::max(0.0, frame_time) + 1.0);
          lead_speed = norm(nxt.position() - ap.position()) / sc.frame_dt;
        }
      }
      double target = kIdmAccel * (1.0 - std::pow(s.speed / desired_speed, 4.0));
      if (std::isfinite(gap)) {
        const double dv = s.speed - lead_speed;
        const double s_star =
            kIdmMinGap + std::max(0.0, s.speed * kIdmHeadway + s.speed * dv / (2.0 * std::sqrt(kIdmAccel * kIdmBrake)));
        const double g = std::max(gap, 0.1);
        target -= kIdmAccel * (s_star / g) * (s_star / g);
      }
      target = std::clamp(target, kAccelLo, kIdmAccel);
      accel += std::clamp(target - accel, -kJerkLimit * dt, kJerkLimit * dt);
      if (s.speed <= 0.0 && accel < 0.0) accel = 0.0;

      const double look = std::max(5.0, 1.0 * s.speed);
      const Pose2D tgt = route.pose_at(ego.s + look);
      const double steer = pure_pursuit_steer(s.pose, tgt.position(), sc.ego.wheelbase, sc.ego.max_steer);
      integrate(s, steer, accel, dt, sc.ego.wheelbase);
      if (f > 0 && collides_at(sc, s.pose, frame_time + 1.0 / sc.substeps)) log.ok = false;
    }
    log.frames.push_back(s);
  }
  return log;
}

std::optional<Scenario> try_build(std::uint64_t seed, const ScenarioParams& p, Rng& rng) {
  Scenario sc;
  sc.seed = seed;
  sc.frame_dt = p.frame_dt;
  sc.substeps = p.substeps;
  sc.sensor = p.sensor;
  sc.ego = p.ego;

  std::uniform_int_distribution<std::size_t> pick(0, p.templates.size() - 1);
  sc.map = make_road(p.templates[pick(rng)], p.road_half_width, rng);
  const Route route(sc.map.centerline);

  const int num_frames = p.history_frames + p.horizon;
  const double v0 = uniform(rng, p.min_speed, p.max_speed);
  const double desired = std::max(3.0, v0 + uniform(rng, -1.0, 2.0));

  if (uniform(rng, 0.0, 1.0) < p.lead_probability) {
    const double s_lead = kStartArc + uniform(rng, 25.0, 65.0);
    const double v_lead = uniform(rng, 0.0, 0.8 * v0);
    Agent a = make_route_agent(route, AgentKind::kVehicle, s_lead, 0.0, v_lead, num_frames, p.frame_dt);
    a.length = uniform(rng, 4.2, 5.0);
    a.width = 1.9;
    sc.agents.push_back(std::move(a));
  }
  std::uniform_int_distribution<int> parked_count(0, p.max_parked);
  const int parked = parked_count(rng);
  for (int i = 0; i < parked; ++i) {
    const double side = uniform(rng, 0.0, 1.0) < 0.5 ? 1.0 : -1.0;
    const double width = 1.9;
    const double lateral = side * (p.road_half_width - 0.5 * width - uniform(rng, 0.0, 0.2));
    Agent a = make_route_agent(route, AgentKind::kVehicle, kStartArc + uniform(rng, 10.0, 150.0), lateral, 0.0,
                               num_frames, p.frame_dt);
    a.length = uniform(rng, 4.2, 5.0);
    a.width = width;
    sc.agents.push_back(std::move(a));
  }
  std::uniform_int_distribution<int> ped_count(0, p.max_pedestrians);
  const int peds = ped_count(rng);
  for (int i = 0; i < peds; ++i) {
    const double side = uniform(rng, 0.0, 1.0) < 0.5 ? 1.0 : -1.0;
    const double lateral = side * uniform(rng, 3.1, p.road_half_width - 0.3);
    Agent a = make_route_agent(route, AgentKind::kPedestrian, kStartArc + uniform(rng, 10.0, 150.0), lateral,
                               uniform(rng, -1.2, 1.2), num_frames, p.frame_dt);
    a.radius = 0.3;
    sc.agents.push_back(std::move(a));
  }

  const Pose2D start_center = route.pose_at(kStartArc - v0 * p.frame_dt);
  const EgoState start{start_center, v0};
  const ExpertLog log = simulate_expert(sc, route, start, desired, num_frames);
  if (!log.ok) return std::nullopt;

  for (int f = 0; f < p.history_frames; ++f) {
    const Pose2D prev = log.frames[static_cast<std::size_t>(f)].pose;
    const Pose2D cur = log.frames[static_cast<std::size_t>(f + 1)].pose;
    sc.history.push_back({cur, relative_movement(prev, cur)});
  }
  const EgoState& now = log.frames[static_cast<std::size_t>(p.history_frames)];
  sc.ego_init = now.pose;
  sc.ego_speed = now.speed;
  for (int k = 1; k <= p.horizon; ++k) {
    const Pose2D fut = log.frames[static_cast<std::size_t>(p.history_frames + k)].pose;
    sc.expert_poses.push_back(fut);
    sc.expert_future.waypoints.push_back(to_local(sc.ego_init, fut.position()));
  }
  return sc;
}

bool expert_is_valid(const Scenario& sc) {
  for (int f = 0; f <= sc.current_frame(); ++f) {
    const Pose2D pose = sc.history[static_cast<std::size_t>(f)].pose;
    if (!sc.map.inside(sc.ego_box(pose))) return false;
    if (collides_at(sc, pose, f)) return false;
  }
  for (const auto& pose : sc.expert_poses) {
    if (!sc.map.inside(sc.ego_box(pose))) return false;
  }
  const RolloutResult r = rollout_controller(sc, sc.expert_future);
  if (r.collided || r.offroad_frames > 0) return false;
  if (!ttc_ok(sc, r) || !comfort_ok(r)) return false;
  return progress_ratio(sc, r) >= 0.99;
}

}  // namespace

std::string to_string(MapTemplate t) {
  switch (t) {
    case MapTemplate::kStraight:
      return "straight";
    case MapTemplate::kLeftCurve:
      return "left";
    case MapTemplate::kRightCurve:
      return "right";
    case MapTemplate::kSCurve:
      return "s_curve";
  }
  return "straight";
}

MapTemplate map_template_from_string(const std::string& s) {
  if (s == "straight") return MapTemplate::kStraight;
  if (s == "left") return MapTemplate::kLeftCurve;
  if (s == "right") return MapTemplate::kRightCurve;
  if (s == "s_curve") return MapTemplate::kSCurve;
  throw ConfigError("unknown map template '" + s + "'");
}

double SensorConfig::ray_angle(int k) const {
  const double fov = fov_deg * std::numbers::pi / 180.0;
  return -0.5 * fov + fov * static_cast<double>(k) / num_rays;
}

void ScenarioParams::validate() const {
  if (sensor.num_rays < 8) throw ConfigError("num_rays must be >= 8");
  if (horizon < 2) throw ConfigError("horizon must be >= 2");
  if (history_frames < 1) throw ConfigError("history_frames must be >= 1");
  if (templates.empty()) throw ConfigError("at least one map template is required");
  if (!(sensor.max_range > 0.0) || !(sensor.fov_deg > 0.0) || sensor.fov_deg >= 360.0)
    throw ConfigError("invalid sensor range/fov");
  if (!(frame_dt > 0.0) || substeps < 1) throw ConfigError("frame_dt and substeps must be positive");
  if (!(min_speed > 0.0) || max_speed < min_speed) throw ConfigError("invalid speed range");
  if (road_half_width < ego.width) throw ConfigError("road_half_width too small for the ego vehicle");
  if (max_retries < 1) throw ConfigError("max_retries must be >= 1");
}

Vec2 RoadMap::bbox_min() const {
  Vec2 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  for (const auto& poly : drivable)
    for (const auto& p : poly) lo = {std::min(lo.x, p.x), std::min(lo.y, p.y)};
  for (const auto& s : boundary) lo = {std::min({lo.x, s.a.x, s.b.x}), std::min({lo.y, s.a.y, s.b.y})};
  return lo;
}

Vec2 RoadMap::bbox_max() const {
  Vec2 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& poly : drivable)
    for (const auto& p : poly) hi = {std::max(hi.x, p.x), std::max(hi.y, p.y)};
  for (const auto& s : boundary) hi = {std::max({hi.x, s.a.x, s.b.x}), std::max({hi.y, s.a.y, s.b.y})};
  return hi;
}

bool RoadMap::inside(Vec2 p) const {
  return std::any_of(drivable.begin(), drivable.end(),
                     [&](const auto& poly) { return point_in_polygon(p, poly); });
}

bool RoadMap::inside(const OrientedBox& box) const {
  const auto c = box.corners();
  return std::all_of(c.begin(), c.end(), [&](Vec2 p) { return inside(p); });
}

double RoadMap::progress(Vec2 p) const { return Route(centerline).project(p).s; }

Pose2D Agent::pose_at(double frame) const {
  if (schedule.empty()) throw InputError("agent has an empty schedule");
  const double last = static_cast<double>(schedule.size() - 1);
  frame = std::clamp(frame, 0.0, last);
  const auto i = static_cast<std::size_t>(std::floor(frame));
  if (i + 1 >= schedule.size()) return schedule.back();
  const double u = frame - static_cast<double>(i);
  if (u == 0.0) return schedule[i];
  const Pose2D& a = schedule[i];
  const Pose2D& b = schedule[i + 1];
  return {a.x + u * (b.x - a.x), a.y + u * (b.y - a.y), normalize_angle(a.yaw + u * normalize_angle(b.yaw - a.yaw))};
}

OrientedBox Agent::box_at(double frame) const { return {pose_at(frame), length, width}; }

Disc Agent::disc_at(double frame) const { return {pose_at(frame).position(), radius}; }

SemanticClass Agent::semantic_class() const {
  return kind == AgentKind::kVehicle ? SemanticClass::kVehicle : SemanticClass::kPedestrian;
}

std::vector<double> Trajectory::flatten() const {
  std::vector<double> out;
  out.reserve(2 * waypoints.size());
  for (const auto& w : waypoints) {
    out.push_back(w.x);
    out.push_back(w.y);
  }
  return out;
}

Trajectory Trajectory::from_flat(const std::vector<double>& flat) {
  if (flat.size() % 2 != 0) throw InputError("flattened trajectory must have even length");
  Trajectory t;
  for (std::size_t i = 0; i < flat.size(); i += 2) t.waypoints.push_back({flat[i], flat[i + 1]});
  return t;
}

Pose2D Scenario::logged_pose(int frame) const {
  if (frame < 0 || frame >= num_frames()) throw InputError("frame " + std::to_string(frame) + " outside scenario log");
  if (frame <= current_frame()) return history[static_cast<std::size_t>(frame)].pose;
  return expert_poses[static_cast<std::size_t>(frame - current_frame() - 1)];
}

SemanticClass Observation::class_of(int ray) const {
  for (int c = 0; c < kNumClasses; ++c)
    if (semantics[static_cast<std::size_t>(ray * kNumClasses + c)] == 1.0) return static_cast<SemanticClass>(c);
  return SemanticClass::kFree;
}

Observation sense(const Scenario& sc, const Pose2D& pose, int frame) {
  if (frame < 0 || frame >= sc.num_frames())
    throw InputError("sense: frame " + std::to_string(frame) + " outside scenario horizon");
  const Vec2 lo = sc.map.bbox_min();
  const Vec2 hi = sc.map.bbox_max();
  if (!std::isfinite(pose.x) || !std::isfinite(pose.y) || pose.x < lo.x || pose.x > hi.x || pose.y < lo.y ||
      pose.y > hi.y)
    throw SensingError("sense: pose outside the map bounding box");

  const int k_rays = sc.sensor.num_rays;
  const double r_max = sc.sensor.max_range;
  Observation obs;
  obs.ranges.assign(static_cast<std::size_t>(k_rays), r_max);
  obs.semantics.assign(static_cast<std::size_t>(k_rays * kNumClasses), 0.0);

  std::vector<OrientedBox> boxes;
  std::vector<Disc> discs;
  std::vector<SemanticClass> box_class;
  for (const auto& a : sc.agents) {
    if (a.kind == AgentKind::kVehicle) {
      boxes.push_back(a.box_at(frame));
      box_class.push_back(a.semantic_class());
    } else {
      discs.push_back(a.disc_at(frame));
    }
  }

  const Vec2 origin = pose.position();
  for (int k = 0; k < k_rays; ++k) {
    const double ang = pose.yaw + sc.sensor.ray_angle(k);
    const Vec2 dir{std::cos(ang), std::sin(ang)};
    double best = std::numeric_limits<double>::infinity();
    SemanticClass cls = SemanticClass::kFree;
    auto consider = [&](std::optional<double> t, SemanticClass c) {
      if (t && *t < best) {
        best = *t;
        cls = c;
      }
    };
    for (const auto& seg : sc.map.boundary) consider(ray_segment(origin, dir, seg), SemanticClass::kBoundary);
    for (std::size_t i = 0; i < boxes.size(); ++i) consider(ray_box(origin, dir, boxes[i]), box_class[i]);
    for (const auto& d : discs) consider(ray_disc(origin, dir, d), SemanticClass::kPedestrian);

    const auto idx = static_cast<std::size_t>(k);
    if (best > r_max) {
      obs.ranges[idx] = r_max;
      cls = SemanticClass::kFree;
    } else {
      obs.ranges[idx] = std::max(best, kMinRange);
    }
    obs.semantics[idx * kNumClasses + static_cast<std::size_t>(cls)] = 1.0;
  }
  return obs;
}

bool collides_at(const Scenario& sc, const Pose2D& ego_pose, double frame) {
  const OrientedBox ego = sc.ego_box(ego_pose);
  for (const auto& a : sc.agents) {
    if (a.kind == AgentKind::kVehicle) {
      if (overlaps(ego, a.box_at(frame))) return true;
    } else if (overlaps(ego, a.disc_at(frame))) {
      return true;
    }
  }
  return false;
}

RolloutResult rollout_controller(const Scenario& sc, const Trajectory& traj, const TrackerParams& tp) {
  const int horizon = static_cast<int>(traj.waypoints.size());
  const double dt = sc.frame_dt;
  const double sub_dt = dt / sc.substeps;
  const int start_frame = sc.current_frame();

  std::vector<Vec2> ref;
  ref.push_back(sc.ego_init.position());
  for (const auto& w : traj.waypoints) ref.push_back(to_global(sc.ego_init, w));
  auto ref_at = [&](double tau) {
    const double u = tau / dt;
    if (u >= horizon) return ref.back();
    const auto i = static_cast<std::size_t>(std::floor(u));
    const double f = u - static_cast<double>(i);
    return ref[i] + f * (ref[i + 1] - ref[i]);
  };
  auto ref_speed = [&](double tau) {
    const auto i = std::min(static_cast<std::size_t>(std::floor(tau / dt)), static_cast<std::size_t>(horizon - 1));
    return norm(ref[i + 1] - ref[i]) / dt;
  };

  RolloutResult r;
  r.origin = sc.ego_init;
  r.speeds.push_back(sc.ego_speed);
  EgoState s{sc.ego_init, sc.ego_speed};
  r.substep_poses.push_back(s.pose);
  for (int f = 0; f < horizon; ++f) {
    for (int k = 0; k < sc.substeps; ++k) {
      const double tau = f * dt + k * sub_dt;
      const Vec2 heading{std::cos(s.pose.yaw), std::sin(s.pose.yaw)};
      Vec2 target = ref_at(tau + tp.lookahead_time);
      if (norm(target - s.pose.position()) < tp.min_lookahead) {
        const Vec2 fwd = ref.back() - s.pose.position();
        if (norm(fwd) >= tp.min_lookahead) target = ref.back();
      }
      const double steer = pure_pursuit_steer(s.pose, target, sc.ego.wheelbase, sc.ego.max_steer);
      const double along = dot(ref_at(tau) - s.pose.position(), heading);
      double accel = tp.speed_gain * (ref_speed(tau) - s.speed) + tp.position_gain * along;
      accel = std::clamp(accel, -tp.max_brake, tp.max_accel);
      integrate(s, steer, accel, sub_dt, sc.ego.wheelbase);
      r.substep_poses.push_back(s.pose);
      const double frame_pos = start_frame + f + static_cast<double>(k + 1) / sc.substeps;
      if (!r.collided && collides_at(sc, s.pose, frame_pos)) {
        r.collided = true;
        r.first_collision_frame = f + 1;
      }
    }
    r.realized.push_back(s.pose);
    r.speeds.push_back(s.speed);
    if (!sc.map.inside(sc.ego_box(s.pose))) ++r.offroad_frames;
  }
  for (int f = 0; f < horizon; ++f) {
    r.accel.push_back((r.speeds[static_cast<std::size_t>(f + 1)] - r.speeds[static_cast<std::size_t>(f)]) / dt);
  }
  for (int f = 0; f + 1 < horizon; ++f) {
    r.jerk.push_back((r.accel[static_cast<std::size_t>(f + 1)] - r.accel[static_cast<std::size_t>(f)]) / dt);
  }
  return r;
}

std::vector<Vec2> RolloutResult::realized_local() const {
  std::vector<Vec2> out;
  out.reserve(realized.size());
  for (const auto& p : realized) out.push_back(to_local(origin, p.position()));
  return out;
}

double average_displacement(const RolloutResult& result, const Trajectory& expert) {
  if (result.realized.size() != expert.waypoints.size())
    throw InputError("reward: rollout and expert horizons differ");
  const auto local = result.realized_local();
  double sum = 0.0;
  for (std::size_t i = 0; i < local.size(); ++i) sum += norm(local[i] - expert.waypoints[i]);
  return sum / static_cast<double>(local.size());
}

double reward(const RolloutResult& result, const Trajectory& expert) {
  return std::exp(-average_displacement(result, expert));
}

bool ttc_ok(const Scenario& sc, const RolloutResult& r, double min_ttc) {
  constexpr double kStep = 0.1;
  constexpr double kStoppedSpeed = 0.1;
  const int start = sc.current_frame();
  for (std::size_t f = 0; f < r.realized.size(); ++f) {
    const double speed = r.speeds[f + 1];
    if (speed < kStoppedSpeed) continue;
    const Pose2D ego = r.realized[f];
    const double frame = start + static_cast<double>(f + 1);
    const Vec2 ego_vel = speed * Vec2{std::cos(ego.yaw), std::sin(ego.yaw)};
    for (const auto& a : sc.agents) {
      const Pose2D ap = a.pose_at(frame);
      const bool has_next = frame + 1.0 <= static_cast<double>(a.schedule.size() - 1);
      const Pose2D other = a.pose_at(has_next ? frame + 1.0 : frame - 1.0);
      Vec2 vel = (1.0 / sc.frame_dt) * (other.position() - ap.position());
      if (!has_next) vel = -1.0 * vel;
      for (double tau = 0.0; tau < min_ttc - 1e-9; tau += kStep) {
        const Vec2 ep = ego.position() + tau * ego_vel;
        const OrientedBox eb{{ep.x, ep.y, ego.yaw}, sc.ego.length, sc.ego.width};
        const Vec2 apos = ap.position() + tau * vel;
        bool hit = false;
        if (a.kind == AgentKind::kVehicle) {
          hit = overlaps(eb, OrientedBox{{apos.x, apos.y, ap.yaw}, a.length, a.width});
        } else {
          hit = overlaps(eb, Disc{apos, a.radius});
        }
        if (hit) return false;
      }
    }
  }
  return true;
}

bool comfort_ok(const RolloutResult& r, const ComfortLimits& limits) {
  for (double a : r.accel)
    if (std::abs(a) > limits.max_accel) return false;
  for (double j : r.jerk)
    if (std::abs(j) > limits.max_jerk) return false;
  return true;
}

double progress_ratio(const Scenario& sc, const RolloutResult& r) {
  const Route route(sc.map.centerline);
  const double s0 = route.project(sc.ego_init.position()).s;
  const double expert = route.project(sc.expert_poses.back().position()).s - s0;
  const double realized = route.project(r.realized.back().position()).s - s0;
  if (expert < 0.5) return 1.0;
  return std::clamp(realized / expert, 0.0, 1.0);
}

double drivable_fraction(const Scenario& sc, const RolloutResult& r) {
  (void)sc;
  if (r.realized.empty()) return 1.0;
  const auto inside = static_cast<double>(r.realized.size()) - static_cast<double>(r.offroad_frames);
  return inside / static_cast<double>(r.realized.size());
}

Scenario build_scenario(std::uint64_t seed, const ScenarioParams& params) {
  params.validate();
  for (int attempt = 0; attempt < params.max_retries; ++attempt) {
    Rng rng = make_rng({stream::kScenario, seed, static_cast<std::uint64_t>(attempt)});
    auto sc = try_build(seed, params, rng);
    if (sc && expert_is_valid(*sc)) return std::move(*sc);
  }
  throw GenerationError("scenario generation failed for seed " + std::to_string(seed) + " after " +
                        std::to_string(params.max_retries) + " attempts");
}

}  // namespace wmdrive
