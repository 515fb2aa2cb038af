#include "wmdrive/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "wmdrive/errors.hpp"
#include "wmdrive/parallel.hpp"

namespace wmdrive {

double aggregate(const SubScores& s) { return s.nc * s.dac * (5.0 * s.ep + 5.0 * s.ttc + 2.0 * s.c) / 12.0; }

SubScores score_rollout(const Scenario& sc, const RolloutResult& r) {
  SubScores s;
  s.nc = r.collided ? 0.0 : 1.0;
  s.dac = drivable_fraction(sc, r);
  s.ep = std::clamp(progress_ratio(sc, r), 0.0, 1.0);
  s.ttc = ttc_ok(sc, r) ? 1.0 : 0.0;
  s.c = comfort_ok(r) ? 1.0 : 0.0;
  return s;
}

ScenarioScore score_scenario(const Scenario& sc, const Trajectory& plan) {
  const auto r = rollout_controller(sc, plan);
  ScenarioScore out;
  out.id = sc.seed;
  out.sub = score_rollout(sc, r);
  out.aggregate = aggregate(out.sub);
  out.reward = reward(r, sc.expert_future);
  return out;
}

Planner model_planner(const Model& m, int window, int ode_steps, std::uint64_t eval_seed) {
  return [&m, window, ode_steps, eval_seed](const Scenario& sc) {
    const auto frames = logged_window(sc, sc.current_frame() - (window - 1), window);
    const auto cond = plan_condition(m, frames);
    return plan_ode(m, cond, derive_seed({stream::kEval, eval_seed, sc.seed}), ode_steps);
  };
}

Planner zero_planner(int horizon) {
  return [horizon](const Scenario&) {
    Trajectory t;
    t.waypoints.assign(static_cast<std::size_t>(horizon), Vec2{});
    return t;
  };
}

Planner constant_velocity_planner(int horizon, double frame_dt) {
  return [horizon, frame_dt](const Scenario& sc) {
    const auto& m = sc.history.back().movement;
    const double v = std::hypot(m.dx, m.dy) / frame_dt;
    Trajectory t;
    for (int k = 1; k <= horizon; ++k) t.waypoints.push_back({v * k * frame_dt, 0.0});
    return t;
  };
}

Planner expert_planner() {
  return [](const Scenario& sc) { return sc.expert_future; };
}

EvalReport run_suite(const Planner& planner, std::span<const Scenario> scenarios, int workers) {
  EvalReport rep;
  rep.rows.resize(scenarios.size());
  parallel_for(scenarios.size(), workers,
               [&](std::size_t i) { rep.rows[i] = score_scenario(scenarios[i], planner(scenarios[i])); });
  if (rep.rows.empty()) return rep;
  const double n = static_cast<double>(rep.rows.size());
  for (const auto& r : rep.rows) {
    rep.mean.nc += r.sub.nc / n;
    rep.mean.dac += r.sub.dac / n;
    rep.mean.ep += r.sub.ep / n;
    rep.mean.ttc += r.sub.ttc / n;
    rep.mean.c += r.sub.c / n;
    rep.mean_aggregate += r.aggregate / n;
    rep.mean_reward += r.reward / n;
  }
  return rep;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

void write_report(const EvalReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  {
    std::ofstream f(dir / "scores.csv", std::ios::binary);
    if (!f) throw IoError("cannot write " + (dir / "scores.csv").string());
    f << "id,NC,DAC,EP,TTC,C,aggregate\n";
    for (const auto& r : report.rows)
      f << r.id << ',' << fmt(r.sub.nc) << ',' << fmt(r.sub.dac) << ',' << fmt(r.sub.ep) << ',' << fmt(r.sub.ttc)
        << ',' << fmt(r.sub.c) << ',' << fmt(r.aggregate) << '\n';
    if (!f) throw IoError("write failed: " + (dir / "scores.csv").string());
  }
  nlohmann::ordered_json j;
  j["planner"] = report.planner;
  j["config_hash"] = report.config_hash;
  j["count"] = report.rows.size();
  j["mean"] = {{"NC", report.mean.nc},   {"DAC", report.mean.dac}, {"EP", report.mean.ep},
               {"TTC", report.mean.ttc}, {"C", report.mean.c},     {"aggregate", report.mean_aggregate},
               {"reward", report.mean_reward}};
  std::vector<std::uint64_t> seeds;
  for (const auto& r : report.rows) seeds.push_back(r.id);
  j["seeds"] = seeds;
  std::ofstream f(dir / "summary.json", std::ios::binary);
  if (!f) throw IoError("cannot write " + (dir / "summary.json").string());
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failed: " + (dir / "summary.json").string());
}

}  // namespace wmdrive
