#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>

#include "wmdrive/checkpoint.hpp"
#include "wmdrive/config.hpp"
#include "wmdrive/train.hpp"

namespace wmdrive {

/// Training loop shared by the CLI and the acceptance suite.
struct StageRun {
  int stage{1};
  std::int64_t end_step{0};             // train until the trainer reaches this step
  std::filesystem::path out_dir;        // empty: no files written
  int checkpoint_every{0};              // 0: only the final checkpoint
  const Checkpoint* resume{nullptr};    // continue an interrupted run of the same stage
  int workers{1};
  std::function<void(const std::string&)> progress;  // optional, every 100 steps
};

inline constexpr const char* kStage1LogHeader = "step,loss_traj,loss_img,loss_d,loss_s,total";
inline constexpr const char* kStage2LogHeader = "iter,mean_reward,reward_std,rl_loss,il_loss";

std::filesystem::path checkpoint_path(const std::filesystem::path& dir);
std::filesystem::path log_path(const std::filesystem::path& dir, int stage);

/// Runs the stage loop on `model` in place. Writes the resolved config, the CSV log and
/// checkpoints into out_dir. Returns the trainer's final step.
std::int64_t run_stage(const RunConfig& cfg, Model& model, std::span<const Scenario> scenarios, const StageRun& run);

}  // namespace wmdrive
