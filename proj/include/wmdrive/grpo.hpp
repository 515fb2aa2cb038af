#pragma once

#include <functional>
#include <span>
#include <vector>

#include "wmdrive/planner.hpp"

namespace wmdrive {

struct GrpoConfig {
  int group_size{8};
  double gamma{0.9};
  double lambda_il{1.0};
  double eps_std{1e-8};
  int il_states{2};  // chain states per chain used by the imitation term
  NoiseSchedule schedule{0.35, 1e-3, 0.95, 8};

  void validate() const;
};

/// Scores a terminal trajectory in flow space. Opaque to the optimizer.
using RewardFn = std::function<double(std::span<const double> flow_traj)>;

struct GroupRollout {
  std::vector<DenoisingChain> chains;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

/// (r - mean) / max(population std, eps_std).
std::vector<double> advantages(std::span<const double> rewards, double eps_std = 1e-8);

/// Log-density of N(mu, s^2 I) at x.
double step_log_prob(std::span<const double> x, std::span<const double> mu, double s);

GroupRollout group_sample(const PlannerWeights& w, std::span<const double> cond, const RewardFn& reward,
                          const GrpoConfig& cfg, Rng& rng);

/// -(1/G) sum_g (1/T) sum_t gamma^(t-1) log pi(x_(t-1) | x_(t)) A_g, with the means
/// recomputed under the current weights. t = 1 is the transition leaving the initial noise.
double rl_loss(const GroupRollout& group, const PlannerWeights& w, std::span<const double> cond,
               const GrpoConfig& cfg, PlannerWeights& grad);

/// ||v(x_t, t) - (x_t - x0) / t||^2, averaged over coordinates and over the rows of x_t
/// (one time per row). Gradients are scaled by `scale` before accumulation.
double il_loss(const PlannerWeights& w, std::span<const double> cond, std::span<const double> x0,
               std::span<const double> x_t, std::span<const double> t, double t_min, PlannerWeights& grad,
               double scale = 1.0);
double il_loss(const PlannerWeights& w, std::span<const double> cond, std::span<const double> x0,
               std::span<const double> x_t, double t, double t_min, PlannerWeights& grad, double scale = 1.0);

struct GrpoLoss {
  double total{0.0};
  double rl{0.0};
  double il{0.0};
};

/// L_rl + lambda_il * mean il_loss over cfg.il_states random non-terminal states per chain.
GrpoLoss grpo_loss(const GroupRollout& group, const PlannerWeights& w, std::span<const double> cond,
                   std::span<const double> x0, const GrpoConfig& cfg, Rng& rng, PlannerWeights& grad);

}  // namespace wmdrive
