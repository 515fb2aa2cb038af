#include "wmdrive/planner.hpp"

#include <cmath>

#include "wmdrive/errors.hpp"

namespace wmdrive {

void TrajScale::validate() const {
  if (!(step >= 0.0) || !(spread > 0.0) || !(lateral > 0.0)) throw ConfigError("trajectory scale must be positive");
}

namespace {

double lateral_scale(const TrajScale& s, std::size_t k, std::size_t horizon) {
  const double u = static_cast<double>(k + 1) / static_cast<double>(horizon);
  return s.lateral * u * u;
}

}  // namespace

std::vector<double> to_flow(const Trajectory& traj, const TrajScale& s) {
  const std::size_t h = traj.waypoints.size();
  std::vector<double> z;
  z.reserve(2 * h);
  for (std::size_t k = 0; k < h; ++k) {
    const auto& p = traj.waypoints[k];
    const double n = static_cast<double>(k + 1);
    z.push_back((p.x - n * s.step) / (n * s.spread));
    z.push_back(p.y / lateral_scale(s, k, h));
  }
  return z;
}

Trajectory from_flow(std::span<const double> z, const TrajScale& s) {
  const std::size_t h = z.size() / 2;
  Trajectory t;
  for (std::size_t k = 0; k < h; ++k) {
    const double n = static_cast<double>(k + 1);
    t.waypoints.push_back({z[2 * k] * (n * s.spread) + n * s.step, z[2 * k + 1] * lateral_scale(s, k, h)});
  }
  return t;
}

PlannerWeights init_planner(const PlannerConfig& cfg, Rng& rng) {
  if (cfg.cond_dim < 1 || cfg.traj_dim < 1 || cfg.hidden < 1 || cfg.time_dim < 2)
    throw ConfigError("planner sizes must be positive");
  PlannerWeights w;
  w.cfg = cfg;
  const auto in = static_cast<std::size_t>(cfg.cond_dim + cfg.traj_dim + cfg.time_dim);
  const auto h = static_cast<std::size_t>(cfg.hidden);
  w.net.init("planner", {in, h, h, static_cast<std::size_t>(cfg.traj_dim)}, rng, 0.5);
  nn::round_params_to_float(w);
  return w;
}

namespace {

std::vector<double> planner_input(const PlannerConfig& cfg, std::span<const double> cond,
                                  std::span<const double> x, std::span<const double> t) {
  const std::size_t rows = t.size();
  const auto C = static_cast<std::size_t>(cfg.cond_dim);
  const auto X = static_cast<std::size_t>(cfg.traj_dim);
  if (cond.size() != rows * C || x.size() != rows * X) throw InputError("planner input shape mismatch");
  std::vector<double> in;
  in.reserve(rows * (C + X + static_cast<std::size_t>(cfg.time_dim)));
  for (std::size_t r = 0; r < rows; ++r) {
    in.insert(in.end(), cond.begin() + static_cast<std::ptrdiff_t>(r * C),
              cond.begin() + static_cast<std::ptrdiff_t>((r + 1) * C));
    in.insert(in.end(), x.begin() + static_cast<std::ptrdiff_t>(r * X),
              x.begin() + static_cast<std::ptrdiff_t>((r + 1) * X));
    const auto te = nn::time_embedding(t[r], static_cast<std::size_t>(cfg.time_dim));
    in.insert(in.end(), te.begin(), te.end());
  }
  return in;
}

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

std::vector<double> planner_velocity(const PlannerWeights& w, std::span<const double> cond,
                                     std::span<const double> x, std::span<const double> t, nn::Mlp::Tape* tape) {
  return w.net.forward(planner_input(w.cfg, cond, x, t), t.size(), tape);
}

std::vector<double> planner_velocity(const PlannerWeights& w, std::span<const double> cond,
                                     std::span<const double> x, double t, nn::Mlp::Tape* tape) {
  const double ts[] = {t};
  return planner_velocity(w, cond, x, ts, tape);
}

std::vector<double> planner_velocity_backward(const PlannerWeights& w, const nn::Mlp::Tape& tape,
                                              std::span<const double> dv, PlannerWeights& grad) {
  const auto d_in = w.net.backward(tape, dv, grad.net);
  const auto C = static_cast<std::size_t>(w.cfg.cond_dim);
  const std::size_t stride = w.net.in_dim();
  std::vector<double> d_cond(tape.rows * C);
  for (std::size_t r = 0; r < tape.rows; ++r)
    std::copy(d_in.begin() + static_cast<std::ptrdiff_t>(r * stride),
              d_in.begin() + static_cast<std::ptrdiff_t>(r * stride + C),
              d_cond.begin() + static_cast<std::ptrdiff_t>(r * C));
  return d_cond;
}

std::vector<double> noisy(std::span<const double> x0, std::span<const double> x1, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("noise level t must lie in [0, 1]");
  if (x0.size() != x1.size()) throw InputError("noisy: size mismatch");
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - t) * x0[i] + t * x1[i];
  return out;
}

LossGrad squared_error(std::span<const double> v, std::span<const double> target) {
  if (v.size() != target.size() || v.empty()) throw InputError("squared_error: size mismatch");
  LossGrad r;
  r.d_input.resize(v.size());
  const double n = static_cast<double>(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double e = v[i] - target[i];
    r.loss += e * e;
    r.d_input[i] = 2.0 * e / n;
  }
  r.loss /= n;
  return r;
}

CondLoss traj_loss(const PlannerWeights& w, std::span<const double> cond, std::span<const double> x0,
                   std::span<const double> x1, std::span<const double> t, PlannerWeights& grad) {
  if (!all_finite(cond) || !all_finite(x0) || !all_finite(x1) || !all_finite(t))
    throw InputError("traj_loss: non-finite input");
  if (x0.size() != x1.size()) throw InputError("traj_loss: size mismatch");
  const std::size_t X = static_cast<std::size_t>(w.cfg.traj_dim);
  std::vector<double> xt(x0.size()), target(x0.size());
  for (std::size_t r = 0; r < t.size(); ++r) {
    const auto row = noisy(x0.subspan(r * X, X), x1.subspan(r * X, X), t[r]);
    std::copy(row.begin(), row.end(), xt.begin() + static_cast<std::ptrdiff_t>(r * X));
  }
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = x1[i] - x0[i];
  nn::Mlp::Tape tape;
  const auto v = planner_velocity(w, cond, xt, t, &tape);
  const auto se = squared_error(v, target);
  return {se.loss, planner_velocity_backward(w, tape, se.d_input, grad)};
}

CondLoss traj_loss(const PlannerWeights& w, std::span<const double> cond, std::span<const double> x0,
                   std::span<const double> x1, double t, PlannerWeights& grad) {
  const double ts[] = {t};
  return traj_loss(w, cond, x0, x1, ts, grad);
}

VelocityFn velocity_fn(const PlannerWeights& w, std::span<const double> cond) {
  std::vector<double> c(cond.begin(), cond.end());
  return [&w, c](std::span<const double> x, double t) {
    const std::size_t rows = x.size() / static_cast<std::size_t>(w.cfg.traj_dim);
    std::vector<double> conds;
    conds.reserve(rows * c.size());
    for (std::size_t r = 0; r < rows; ++r) conds.insert(conds.end(), c.begin(), c.end());
    const std::vector<double> ts(rows, t);
    return planner_velocity(w, conds, x, ts);
  };
}

std::vector<double> sample_ode(const VelocityFn& v, std::span<const double> x_start, const TimeGrid& grid) {
  if (grid.steps < 1) throw InputError("sample_ode needs at least one step");
  std::vector<double> x(x_start.begin(), x_start.end());
  const double dt = grid.dt();
  for (int k = 0; k < grid.steps; ++k) {
    const auto vel = v(x, grid.at(k));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = x[i] + vel[i] * dt;
  }
  return x;
}

void NoiseSchedule::validate() const {
  if (!(a >= 0.0)) throw ConfigError("noise level a must be non-negative");
  if (!(t_min > 0.0 && t_min < t_max && t_max < 1.0)) throw ConfigError("need 0 < t_min < t_max < 1");
  if (steps < 1) throw ConfigError("SDE step count must be at least 1");
}

double sigma(double t, double a, double t_min, double t_max) {
  if (!(t >= t_min && t <= t_max)) throw InputError("sigma: t outside [t_min, t_max]");
  return a * std::sqrt(t / (1.0 - t));
}

SdeStep sde_step(std::span<const double> x, std::span<const double> v, double t, double dt, double a,
                 double t_min, double t_max) {
  const double s = sigma(t, a, t_min, t_max);
  const double s2 = s * s;
  const double c_x = 1.0 + s2 * dt / (2.0 * t);
  const double c_v = 1.0 + s2 * (1.0 - t) / (2.0 * t);
  SdeStep st;
  st.mean.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) st.mean[i] = x[i] * c_x + v[i] * c_v * dt;
  st.scale = s * std::sqrt(std::abs(dt));
  st.c_v = c_v * dt;
  return st;
}

std::vector<DenoisingChain> sample_sde_group(const VelocityFn& v, std::span<const double> x_start, int dim,
                                             const NoiseSchedule& sched, Rng& rng) {
  sched.validate();
  const auto X = static_cast<std::size_t>(dim);
  if (X == 0 || x_start.size() % X != 0) throw InputError("sample_sde: start state shape mismatch");
  const std::size_t G = x_start.size() / X;
  const TimeGrid grid = sched.grid();
  const double dt = grid.dt();
  std::vector<DenoisingChain> chains(G);
  for (std::size_t g = 0; g < G; ++g) {
    chains[g].states.emplace_back(x_start.begin() + static_cast<std::ptrdiff_t>(g * X),
                                  x_start.begin() + static_cast<std::ptrdiff_t>((g + 1) * X));
    chains[g].times.push_back(grid.at(0));
  }
  std::vector<double> x(x_start.begin(), x_start.end());
  std::vector<double> eps(x.size());
  for (int k = 0; k < sched.steps; ++k) {
    const double t = grid.at(k);
    const double t_next = k + 1 == sched.steps ? sched.t_min : grid.at(k + 1);
    const auto vel = v(x, t);
    auto st = sde_step(x, vel, t, dt, sched.a, sched.t_min, sched.t_max);
    fill_normal(rng, eps);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = st.mean[i] + st.scale * eps[i];
    for (std::size_t g = 0; g < G; ++g) {
      auto& c = chains[g];
      const auto lo = static_cast<std::ptrdiff_t>(g * X);
      const auto hi = static_cast<std::ptrdiff_t>((g + 1) * X);
      c.means.emplace_back(st.mean.begin() + lo, st.mean.begin() + hi);
      c.scales.push_back(st.scale);
      c.states.emplace_back(x.begin() + lo, x.begin() + hi);
      c.times.push_back(t_next);
    }
  }
  return chains;
}

DenoisingChain sample_sde(const VelocityFn& v, std::span<const double> x_start, const NoiseSchedule& sched,
                          Rng& rng) {
  return std::move(sample_sde_group(v, x_start, static_cast<int>(x_start.size()), sched, rng).front());
}

DenoisingChain sample_sde(const VelocityFn& v, int dim, const NoiseSchedule& sched, Rng& rng) {
  std::vector<double> x(static_cast<std::size_t>(dim));
  fill_normal(rng, x);
  return sample_sde(v, x, sched, rng);
}

}  // namespace wmdrive
