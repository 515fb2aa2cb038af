#include "wmdrive/scenario_io.hpp"

#include <fstream>

#include "wmdrive/errors.hpp"

namespace wmdrive {

using nlohmann::json;

namespace {

json vec(Vec2 p) { return json::array({p.x, p.y}); }
json pose(const Pose2D& p) { return json::array({p.x, p.y, p.yaw}); }

Vec2 to_vec(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }
Pose2D to_pose(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

json polyline(const std::vector<Vec2>& pts) {
  json a = json::array();
  for (const auto& p : pts) a.push_back(vec(p));
  return a;
}

std::vector<Vec2> to_polyline(const json& j) {
  std::vector<Vec2> out;
  for (const auto& p : j) out.push_back(to_vec(p));
  return out;
}

}  // namespace

json scenario_to_json(const Scenario& sc) {
  json j;
  j["v"] = kScenarioSchemaVersion;
  j["seed"] = sc.seed;
  j["frame_dt"] = sc.frame_dt;
  j["substeps"] = sc.substeps;
  j["sensor"] = {{"num_rays", sc.sensor.num_rays}, {"fov_deg", sc.sensor.fov_deg}, {"max_range", sc.sensor.max_range}};
  j["ego"] = {{"length", sc.ego.length},
              {"width", sc.ego.width},
              {"wheelbase", sc.ego.wheelbase},
              {"max_steer", sc.ego.max_steer}};

  json polys = json::array();
  for (const auto& poly : sc.map.drivable) polys.push_back(polyline(poly));
  json boundary = json::array();
  for (const auto& s : sc.map.boundary) boundary.push_back(json::array({s.a.x, s.a.y, s.b.x, s.b.y}));
  j["map"] = {{"template", to_string(sc.map.kind)},
              {"centerline", polyline(sc.map.centerline)},
              {"drivable", polys},
              {"boundary", boundary}};

  j["ego_init"] = {{"pose", pose(sc.ego_init)}, {"speed", sc.ego_speed}};

  json agents = json::array();
  for (const auto& a : sc.agents) {
    json ja;
    ja["kind"] = a.kind == AgentKind::kVehicle ? "vehicle" : "pedestrian";
    if (a.kind == AgentKind::kVehicle) {
      ja["shape"] = {{"type", "box"}, {"length", a.length}, {"width", a.width}};
    } else {
      ja["shape"] = {{"type", "disc"}, {"radius", a.radius}};
    }
    json sched = json::array();
    for (const auto& p : a.schedule) sched.push_back(pose(p));
    ja["schedule"] = sched;
    agents.push_back(ja);
  }
  j["agents"] = agents;

  json hist = json::array();
  for (const auto& h : sc.history) {
    hist.push_back({{"pose", pose(h.pose)}, {"movement", json::array({h.movement.dx, h.movement.dy, h.movement.dyaw})}});
  }
  j["history"] = hist;
  j["expert_future"] = polyline(sc.expert_future.waypoints);
  json ep = json::array();
  for (const auto& p : sc.expert_poses) ep.push_back(pose(p));
  j["expert_poses"] = ep;
  return j;
}

Scenario scenario_from_json(const json& j) {
  try {
    if (j.at("v").get<int>() != kScenarioSchemaVersion)
      throw InputError("unsupported scenario schema version " + j.at("v").dump());
    Scenario sc;
    sc.seed = j.at("seed").get<std::uint64_t>();
    sc.frame_dt = j.at("frame_dt").get<double>();
    sc.substeps = j.at("substeps").get<int>();
    const auto& s = j.at("sensor");
    sc.sensor = {s.at("num_rays").get<int>(), s.at("fov_deg").get<double>(), s.at("max_range").get<double>()};
    const auto& e = j.at("ego");
    sc.ego = {e.at("length").get<double>(), e.at("width").get<double>(), e.at("wheelbase").get<double>(),
              e.at("max_steer").get<double>()};
    const auto& m = j.at("map");
    sc.map.kind = map_template_from_string(m.at("template").get<std::string>());
    sc.map.centerline = to_polyline(m.at("centerline"));
    for (const auto& poly : m.at("drivable")) sc.map.drivable.push_back(to_polyline(poly));
    for (const auto& b : m.at("boundary"))
      sc.map.boundary.push_back({{b.at(0).get<double>(), b.at(1).get<double>()},
                                 {b.at(2).get<double>(), b.at(3).get<double>()}});
    sc.ego_init = to_pose(j.at("ego_init").at("pose"));
    sc.ego_speed = j.at("ego_init").at("speed").get<double>();
    for (const auto& ja : j.at("agents")) {
      Agent a;
      const auto kind = ja.at("kind").get<std::string>();
      if (kind == "vehicle") {
        a.kind = AgentKind::kVehicle;
        a.length = ja.at("shape").at("length").get<double>();
        a.width = ja.at("shape").at("width").get<double>();
      } else if (kind == "pedestrian") {
        a.kind = AgentKind::kPedestrian;
        a.radius = ja.at("shape").at("radius").get<double>();
      } else {
        throw InputError("unknown agent kind '" + kind + "'");
      }
      for (const auto& p : ja.at("schedule")) a.schedule.push_back(to_pose(p));
      sc.agents.push_back(std::move(a));
    }
    for (const auto& h : j.at("history")) {
      const auto& mv = h.at("movement");
      sc.history.push_back({to_pose(h.at("pose")), {mv.at(0).get<double>(), mv.at(1).get<double>(), mv.at(2).get<double>()}});
    }
    sc.expert_future.waypoints = to_polyline(j.at("expert_future"));
    for (const auto& p : j.at("expert_poses")) sc.expert_poses.push_back(to_pose(p));
    return sc;
  } catch (const json::exception& ex) {
    throw InputError(std::string("malformed scenario record: ") + ex.what());
  }
}

void write_scenarios(const std::filesystem::path& path, std::span<const Scenario> scenarios) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (const auto& sc : scenarios) out << scenario_to_json(sc).dump() << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<Scenario> read_scenarios(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open scenario file '" + path.string() + "'");
  std::vector<Scenario> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& ex) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
    out.push_back(scenario_from_json(j));
  }
  return out;
}

}  // namespace wmdrive
