#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "wmdrive/grpo.hpp"
#include "wmdrive/model.hpp"

namespace wmdrive {

enum class DepthTarget : int { kFuture = 0, kPresent = 1 };

struct TrainConfig {
  int stage1_steps{20000};
  int stage2_iters{500};
  double lr1{3e-4};
  double lr2{1e-5};
  int batch_size{16};
  int stage2_batch{8};
  int window1{5};
  int window2{4};
  double t_min{1e-3};
  bool use_img{true};
  bool use_depth{true};
  bool use_sem{true};
  DepthTarget depth_target{DepthTarget::kFuture};
  GrpoConfig grpo;
  int ode_steps{32};
  std::uint64_t seed{1};
  int shards{4};  // fixed gradient partition; results never depend on worker count

  void validate() const;
};

// Training inputs carry only observations, ego movements, commands and
// trajectories. Nothing else about the scene is reachable from them.

/// window + 1 logged frames; targets[i] is the logged future of frame i in its own ego frame.
struct Stage1Sample {
  FrameWindow frames;
  std::vector<Trajectory> targets;
};

Stage1Sample make_stage1_sample(const Scenario& sc, int window, int horizon);

/// Encoded, tokenized form of a Stage1Sample.
struct PreparedStage1 {
  TokenSequence tokens;                              // window frames
  std::vector<std::vector<double>> next_features;    // window, F_{i+1}
  std::vector<std::vector<double>> next_actions;     // window, dA_{i+1} tokens
  std::vector<std::vector<double>> depth_future;     // window, canonical scan of frame i+1
  std::vector<std::vector<double>> depth_present;    // window, canonical scan of frame i
  std::vector<std::array<std::vector<double>, kNumQueryClasses>> semantic;  // window x class
  std::vector<std::vector<double>> flow_targets;     // window, flow-space trajectories
};

PreparedStage1 prepare_stage1(const Model& m, const Stage1Sample& s);

struct Stage1Losses {
  double traj{0.0};
  double img{0.0};
  double depth{0.0};
  double sem{0.0};
  double total{0.0};
};

/// Per-frame-mean losses of one sample. When grad is non-null, adds the gradient of
/// the total into it.
Stage1Losses stage1_sample_losses(const Model& m, const PreparedStage1& s, const TrainConfig& cfg, Rng& rng,
                                  WorldModel* grad);

struct Stage2Sample {
  FrameWindow frames;
  Trajectory expert;
  RewardFn reward;  // scores a flow-space trajectory by closed-loop rollout
};

Stage2Sample make_stage2_sample(const Scenario& sc, int window, const TrajScale& scale);

struct PreparedStage2 {
  std::vector<double> cond;
  std::vector<double> x0;
  RewardFn reward;
};

/// The backbone is frozen in stage 2, so conditioning is computed once.
PreparedStage2 prepare_stage2(const Model& m, const Stage2Sample& s);

struct Stage2Stats {
  double mean_reward{0.0};
  double reward_std{0.0};
  double rl_loss{0.0};
  double il_loss{0.0};
};

class Trainer {
 public:
  Trainer(Model& model, const TrainConfig& cfg, int stage, int workers);

  Stage1Losses stage1_step(const std::vector<PreparedStage1>& data);
  Stage2Stats stage2_step(const std::vector<PreparedStage2>& data);

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s);
  int stage() const { return stage_; }
  nn::Adam& optimizer() { return adam_; }
  const nn::Adam& optimizer() const { return adam_; }

 private:
  Model& model_;
  TrainConfig cfg_;
  int stage_;
  int workers_;
  std::int64_t step_{0};
  nn::Adam adam_;
};

}  // namespace wmdrive
