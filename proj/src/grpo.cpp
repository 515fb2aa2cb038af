#include "wmdrive/grpo.hpp"

#include <cmath>
#include <numbers>

#include "wmdrive/errors.hpp"

namespace wmdrive {

void GrpoConfig::validate() const {
  if (group_size < 2) throw ConfigError("GRPO group size must be at least 2");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(lambda_il >= 0.0)) throw ConfigError("lambda_il must be non-negative");
  if (!(eps_std > 0.0)) throw ConfigError("eps_std must be positive");
  if (il_states < 0) throw ConfigError("il_states must be non-negative");
  schedule.validate();
}

std::vector<double> advantages(std::span<const double> rewards, double eps_std) {
  if (rewards.size() < 2) throw InputError("advantages need a group of at least 2");
  const double n = static_cast<double>(rewards.size());
  // Centered on the first reward so that a constant group is exactly zero.
  const double r0 = rewards[0];
  double shift = 0.0;
  for (double r : rewards) shift += r - r0;
  shift /= n;
  std::vector<double> a(rewards.size());
  double var = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = (rewards[i] - r0) - shift;
    var += a[i] * a[i];
  }
  var /= n;
  const double sd = std::max(std::sqrt(var), eps_std);
  for (auto& v : a) v /= sd;
  return a;
}

double step_log_prob(std::span<const double> x, std::span<const double> mu, double s) {
  if (!(s > 0.0)) throw InputError("step_log_prob: noise scale must be positive");
  if (x.size() != mu.size()) throw InputError("step_log_prob: size mismatch");
  double q = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) q += (x[i] - mu[i]) * (x[i] - mu[i]);
  const double n = static_cast<double>(x.size());
  return -q / (2.0 * s * s) - n * std::log(s) - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

GroupRollout group_sample(const PlannerWeights& w, std::span<const double> cond, const RewardFn& reward,
                          const GrpoConfig& cfg, Rng& rng) {
  cfg.validate();
  const int dim = w.cfg.traj_dim;
  // One initial noise draw shared by the group; members differ only through step noise.
  std::vector<double> x0(static_cast<std::size_t>(dim));
  fill_normal(rng, x0);
  std::vector<double> x;
  x.reserve(static_cast<std::size_t>(cfg.group_size * dim));
  for (int g = 0; g < cfg.group_size; ++g) x.insert(x.end(), x0.begin(), x0.end());
  GroupRollout g;
  g.chains = sample_sde_group(velocity_fn(w, cond), x, dim, cfg.schedule, rng);
  for (const auto& c : g.chains) g.rewards.push_back(reward(c.terminal()));
  g.advantages = advantages(g.rewards, cfg.eps_std);
  return g;
}

namespace {

std::vector<double> repeat_rows(std::span<const double> row, std::size_t rows) {
  std::vector<double> out;
  out.reserve(rows * row.size());
  for (std::size_t r = 0; r < rows; ++r) out.insert(out.end(), row.begin(), row.end());
  return out;
}

}  // namespace

double rl_loss(const GroupRollout& group, const PlannerWeights& w, std::span<const double> cond,
               const GrpoConfig& cfg, PlannerWeights& grad) {
  const double G = static_cast<double>(group.chains.size());
  const double dt = cfg.schedule.grid().dt();
  const auto X = static_cast<std::size_t>(w.cfg.traj_dim);

  // Every transition with a non-zero weight becomes one row of a single batched pass.
  std::vector<double> xs, ts, weights;
  std::vector<const std::vector<double>*> nexts;
  for (std::size_t g = 0; g < group.chains.size(); ++g) {
    const double A = group.advantages[g];
    if (A == 0.0) continue;
    const auto& c = group.chains[g];
    const double T = static_cast<double>(c.steps());
    double disc = 1.0;
    for (int k = 0; k < c.steps(); ++k, disc *= cfg.gamma) {
      const auto uk = static_cast<std::size_t>(k);
      if (!(c.scales[uk] > 0.0)) continue;
      xs.insert(xs.end(), c.states[uk].begin(), c.states[uk].end());
      ts.push_back(c.times[uk]);
      weights.push_back(-disc * A / (G * T));
      nexts.push_back(&c.states[uk + 1]);
    }
  }
  if (ts.empty()) return 0.0;
  const std::size_t rows = ts.size();
  nn::Mlp::Tape tape;
  const auto vel = planner_velocity(w, repeat_rows(cond, rows), xs, ts, &tape);
  double loss = 0.0;
  std::vector<double> dv(vel.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::span<const double> x(xs.data() + r * X, X), v(vel.data() + r * X, X);
    const auto st = sde_step(x, v, ts[r], dt, cfg.schedule.a, cfg.schedule.t_min, cfg.schedule.t_max);
    const auto& x_next = *nexts[r];
    loss += weights[r] * step_log_prob(x_next, st.mean, st.scale);
    // d log pi / d mu = (x_next - mu) / s^2 and d mu / d v = c_v
    for (std::size_t i = 0; i < X; ++i)
      dv[r * X + i] = weights[r] * (x_next[i] - st.mean[i]) / (st.scale * st.scale) * st.c_v;
  }
  planner_velocity_backward(w, tape, dv, grad);
  return loss;
}

double il_loss(const PlannerWeights& w, std::span<const double> cond, std::span<const double> x0,
               std::span<const double> x_t, std::span<const double> t, double t_min, PlannerWeights& grad,
               double scale) {
  const std::size_t rows = t.size();
  const std::size_t X = x0.size();
  if (x_t.size() != rows * X) throw InputError("il_loss: size mismatch");
  std::vector<double> target(x_t.size());
  for (std::size_t r = 0; r < rows; ++r) {
    if (!(t[r] >= t_min)) throw InputError("il_loss: t below t_min");
    for (std::size_t i = 0; i < X; ++i) target[r * X + i] = (x_t[r * X + i] - x0[i]) / t[r];
  }
  nn::Mlp::Tape tape;
  const auto v = planner_velocity(w, repeat_rows(cond, rows), x_t, t, &tape);
  auto se = squared_error(v, target);
  for (auto& d : se.d_input) d *= scale;
  planner_velocity_backward(w, tape, se.d_input, grad);
  return se.loss;
}

double il_loss(const PlannerWeights& w, std::span<const double> cond, std::span<const double> x0,
               std::span<const double> x_t, double t, double t_min, PlannerWeights& grad, double scale) {
  const double ts[] = {t};
  return il_loss(w, cond, x0, x_t, ts, t_min, grad, scale);
}

GrpoLoss grpo_loss(const GroupRollout& group, const PlannerWeights& w, std::span<const double> cond,
                   std::span<const double> x0, const GrpoConfig& cfg, Rng& rng, PlannerWeights& grad) {
  GrpoLoss r;
  r.rl = rl_loss(group, w, cond, cfg, grad);
  if (cfg.lambda_il > 0.0 && cfg.il_states > 0) {
    std::vector<double> xs, ts;
    for (const auto& c : group.chains) {
      // Non-terminal states only: the terminal state sits at t_min.
      std::uniform_int_distribution<int> pick(0, c.steps() - 1);
      for (int j = 0; j < cfg.il_states; ++j) {
        const auto k = static_cast<std::size_t>(pick(rng));
        xs.insert(xs.end(), c.states[k].begin(), c.states[k].end());
        ts.push_back(c.times[k]);
      }
    }
    r.il = il_loss(w, cond, x0, xs, ts, cfg.schedule.t_min, grad, cfg.lambda_il);
  }
  r.total = r.rl + cfg.lambda_il * r.il;
  return r;
}

}  // namespace wmdrive
