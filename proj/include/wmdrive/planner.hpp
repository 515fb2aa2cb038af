#pragma once

#include <functional>
#include <span>
#include <vector>

#include "wmdrive/nn.hpp"
#include "wmdrive/world_sim.hpp"

namespace wmdrive {

/// Per-waypoint affine map between metric waypoints and flow space.
/// Waypoint k (1-based) of H: x -> (x - k step) / (k spread), y -> y / (lateral (k/H)^2).
struct TrajScale {
  double step{4.5};    // mean forward displacement per frame, meters
  double spread{1.5};  // half-range of that displacement, meters
  double lateral{2.5};  // lateral scale at the last waypoint, meters

  void validate() const;
};

std::vector<double> to_flow(const Trajectory& traj, const TrajScale& s);
Trajectory from_flow(std::span<const double> z, const TrajScale& s);

struct PlannerConfig {
  int cond_dim{512};
  int traj_dim{16};
  int hidden{256};
  int time_dim{32};
};

/// Velocity net v(cond, x_t, t): three dense layers over [cond, x_t, time embedding].
struct PlannerWeights {
  PlannerConfig cfg;
  nn::Mlp net;

  template <class F>
  void for_each_param(F&& f) {
    net.for_each_param(f);
  }
  template <class F>
  void for_each_param(F&& f) const {
    net.for_each_param(f);
  }
};

PlannerWeights init_planner(const PlannerConfig& cfg, Rng& rng);

/// Batched velocity: cond is rows x cond_dim, x is rows x traj_dim, one time per row.
std::vector<double> planner_velocity(const PlannerWeights& w, std::span<const double> cond,
                                     std::span<const double> x, std::span<const double> t,
                                     nn::Mlp::Tape* tape = nullptr);
std::vector<double> planner_velocity(const PlannerWeights& w, std::span<const double> cond,
                                     std::span<const double> x, double t, nn::Mlp::Tape* tape = nullptr);

/// Backpropagates dL/dv; returns dL/dcond (rows x cond_dim) and accumulates weight gradients.
std::vector<double> planner_velocity_backward(const PlannerWeights& w, const nn::Mlp::Tape& tape,
                                              std::span<const double> dv, PlannerWeights& grad);

/// (1 - t) x0 + t x1.
std::vector<double> noisy(std::span<const double> x0, std::span<const double> x1, double t);

struct LossGrad {
  double loss{0.0};
  std::vector<double> d_input;
};

/// mean((v - target)^2) and its gradient w.r.t. v.
LossGrad squared_error(std::span<const double> v, std::span<const double> target);

struct CondLoss {
  double loss{0.0};
  std::vector<double> d_cond;
};

/// Flow-matching loss against the x1 - x0 direction, averaged over every row and
/// coordinate. Rows are given by t.size(). Weight gradients go to grad.
CondLoss traj_loss(const PlannerWeights& w, std::span<const double> cond, std::span<const double> x0,
                   std::span<const double> x1, std::span<const double> t, PlannerWeights& grad);
CondLoss traj_loss(const PlannerWeights& w, std::span<const double> cond, std::span<const double> x0,
                   std::span<const double> x1, double t, PlannerWeights& grad);

/// Velocity of every row of x (rows x dim) at a shared time.
using VelocityFn = std::function<std::vector<double>(std::span<const double> x, double t)>;

/// Broadcasts one conditioning vector over all rows.
VelocityFn velocity_fn(const PlannerWeights& w, std::span<const double> cond);

/// Uniform time grid from t_start down to t_end with `steps` intervals.
struct TimeGrid {
  double t_start{1.0};
  double t_end{0.0};
  int steps{32};

  double dt() const { return -(t_start - t_end) / steps; }
  double at(int k) const { return t_start + k * dt(); }
};

/// Euler integration of the velocity field from x_start at grid.t_start.
std::vector<double> sample_ode(const VelocityFn& v, std::span<const double> x_start, const TimeGrid& grid);

struct NoiseSchedule {
  double a{0.35};
  double t_min{1e-3};
  double t_max{1.0 - 1e-3};
  int steps{8};

  void validate() const;
  TimeGrid grid() const { return {t_max, t_min, steps}; }
};

/// a * sqrt(t / (1 - t)); t must lie in [t_min, t_max].
double sigma(double t, double a, double t_min = 1e-3, double t_max = 1.0 - 1e-3);

/// Deterministic part of one stochastic step and its noise scale.
struct SdeStep {
  std::vector<double> mean;
  double scale{0.0};
  double c_v{0.0};  // d mean / d v
};

SdeStep sde_step(std::span<const double> x, std::span<const double> v, double t, double dt, double a,
                 double t_min, double t_max);

/// States run from the initial noise (index 0, t = t_max) to the terminal sample (index T).
struct DenoisingChain {
  std::vector<double> times;                // T + 1
  std::vector<std::vector<double>> states;  // T + 1
  std::vector<std::vector<double>> means;   // T
  std::vector<double> scales;               // T

  int steps() const { return static_cast<int>(means.size()); }
  const std::vector<double>& terminal() const { return states.back(); }
};

DenoisingChain sample_sde(const VelocityFn& v, std::span<const double> x_start, const NoiseSchedule& sched,
                          Rng& rng);
/// Initial noise is drawn first, then each step's noise for all chains in row order.
DenoisingChain sample_sde(const VelocityFn& v, int dim, const NoiseSchedule& sched, Rng& rng);

/// Independent chains advanced together; x_start is chains x dim.
std::vector<DenoisingChain> sample_sde_group(const VelocityFn& v, std::span<const double> x_start, int dim,
                                             const NoiseSchedule& sched, Rng& rng);

}  // namespace wmdrive
