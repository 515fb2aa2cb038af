#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wmdrive/model.hpp"
#include "wmdrive/world_sim.hpp"

namespace wmdrive {

struct SubScores {
  double nc{0.0};
  double dac{0.0};
  double ep{0.0};
  double ttc{0.0};
  double c{0.0};
};

/// NC * DAC * (5 EP + 5 TTC + 2 C) / 12.
double aggregate(const SubScores& s);

SubScores score_rollout(const Scenario& sc, const RolloutResult& r);

struct ScenarioScore {
  std::uint64_t id{0};
  SubScores sub;
  double aggregate{0.0};
  double reward{0.0};  // exp(-ADE) against the expert
};

ScenarioScore score_scenario(const Scenario& sc, const Trajectory& plan);

/// Evaluation may read the full scenario; only the planner's view is restricted.
using Planner = std::function<Trajectory(const Scenario&)>;

/// ODE planner on the last `window` logged frames; initial noise is keyed by (seed, scenario seed).
Planner model_planner(const Model& m, int window, int ode_steps, std::uint64_t eval_seed);
Planner zero_planner(int horizon);
/// Straight ahead at the speed implied by the last logged movement.
Planner constant_velocity_planner(int horizon, double frame_dt);
Planner expert_planner();

struct EvalReport {
  std::vector<ScenarioScore> rows;
  SubScores mean;
  double mean_aggregate{0.0};
  double mean_reward{0.0};
  std::string planner;
  std::string config_hash;
};

EvalReport run_suite(const Planner& planner, std::span<const Scenario> scenarios, int workers);

/// Writes scores.csv and summary.json into dir.
void write_report(const EvalReport& report, const std::filesystem::path& dir);

}  // namespace wmdrive
