#pragma once

#include <cstdint>
#include <vector>

#include "wmdrive/backbone.hpp"
#include "wmdrive/encoder.hpp"
#include "wmdrive/forecast_heads.hpp"
#include "wmdrive/planner.hpp"
#include "wmdrive/world_sim.hpp"

namespace wmdrive {

enum class NavCommand : int { kLeft = 0, kStraight = 1, kRight = 2 };
inline constexpr int kNumCommands = 3;

/// Route intention read off a future trajectory's closing heading.
NavCommand nav_command(const Trajectory& future);

/// Normalized movement followed by the command one-hot.
inline constexpr int kActionDim = 3 + kNumCommands;
std::vector<double> action_token(const RelativeMovement& m, NavCommand cmd);

struct ModelConfig {
  int num_rays{64};
  double max_range{50.0};
  int horizon{8};
  int feature_dim{128};
  int width{256};
  int layers{4};
  int heads{4};
  int max_frames{8};
  int ffn_mult{4};
  int planner_hidden{256};
  int head_hidden{256};
  int time_dim{32};
  int embed_dim{16};
  double c_max{100.0};
  double lambda_c{0.1};
  TrajScale traj_scale;
  std::uint64_t encoder_seed{7};
  std::uint64_t init_seed{1};

  BackboneConfig backbone() const;
  PlannerConfig planner() const;
  HeadsConfig heads_config() const;
};

/// Everything the optimizer may touch in stage 1.
struct WorldModel {
  BackboneWeights bb;
  PlannerWeights planner;
  ForecastHeads heads;

  template <class F>
  void for_each_param(F&& f) {
    bb.for_each_param(f), planner.for_each_param(f), heads.for_each_param(f);
  }
  template <class F>
  void for_each_param(F&& f) const {
    bb.for_each_param(f), planner.for_each_param(f), heads.for_each_param(f);
  }
};

struct Model {
  ModelConfig cfg;
  EncoderWeights enc;
  ClassEmbeddingTable classes;
  WorldModel net;
};

Model init_model(const ModelConfig& cfg);

/// Observations and movements of `count` consecutive logged frames starting at `first`.
struct FrameWindow {
  std::vector<Observation> obs;
  std::vector<RelativeMovement> moves;
  NavCommand command{NavCommand::kStraight};
};

FrameWindow logged_window(const Scenario& sc, int first, int count);

TokenSequence make_tokens(const Model& m, const FrameWindow& w, int count);

/// Backbone conditioning for the last frame of the window.
std::vector<double> plan_condition(const Model& m, const FrameWindow& w);

/// ODE plan from seeded initial noise.
Trajectory plan_ode(const Model& m, const std::vector<double>& cond, std::uint64_t noise_seed, int steps);

/// Movement implied by the first planned waypoint, used for the forecast heads at inference.
RelativeMovement movement_from_plan(const Trajectory& plan);

}  // namespace wmdrive
