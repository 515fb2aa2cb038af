#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "checks.hpp"
#include "wmdrive/errors.hpp"
#include "wmdrive/grpo.hpp"
#include "wmdrive/rng.hpp"

namespace wmdrive {
namespace {

PlannerWeights tiny_planner(Rng& rng, int cond_dim = 4, int traj_dim = 4) {
  PlannerConfig pc;
  pc.cond_dim = cond_dim;
  pc.traj_dim = traj_dim;
  pc.hidden = 8;
  pc.time_dim = 4;
  return init_planner(pc, rng);
}

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

TEST(Grpo, AdvantagesReferenceValues) {
  const auto a = advantages(std::vector<double>{1.0, 2.0, 3.0});
  ASSERT_EQ(a.size(), 3u);
  // Population std of (1, 2, 3) is sqrt(2/3).
  EXPECT_NEAR(a[0], -1.0 / std::sqrt(2.0 / 3.0), 1e-12);
  EXPECT_NEAR(a[0], -1.224745, 1e-6);
  EXPECT_EQ(a[1], 0.0);
  EXPECT_NEAR(a[2], 1.224745, 1e-6);
}

TEST(Grpo, ConstantRewardsGiveZeroAdvantages) {
  for (double r : {0.0, 0.37, 1e6}) {
    const auto a = advantages(std::vector<double>(5, r));
    for (double v : a) EXPECT_EQ(v, 0.0);
  }
}

TEST(Grpo, AdvantagesShiftAndScaleInvariant) {
  const std::vector<double> r{0.5, 0.25, 0.75, 1.0};
  const auto base = advantages(r);
  std::vector<double> shifted(r), scaled(r);
  for (auto& v : shifted) v += 2.0;
  for (auto& v : scaled) v *= 4.0;
  EXPECT_EQ(advantages(shifted), base);
  EXPECT_EQ(advantages(scaled), base);
}

TEST(Grpo, StepLogProbClosedForms) {
  const std::vector<double> mu{0.3, -0.2};
  EXPECT_NEAR(step_log_prob(mu, mu, 1.0), -std::log(2.0 * std::numbers::pi), 1e-12);
  EXPECT_NEAR(step_log_prob(mu, mu, 1.0), -1.837877, 1e-6);
  const std::vector<double> m8(8, 0.1);
  EXPECT_NEAR(step_log_prob(m8, m8, 0.3) - step_log_prob(m8, m8, 0.6), 8.0 * std::log(2.0), 1e-12);
  double prev = step_log_prob(mu, mu, 0.5);
  for (double d : {0.1, 0.2, 0.5, 1.0}) {
    const double lp = step_log_prob(std::vector<double>{0.3 + d, -0.2}, mu, 0.5);
    EXPECT_LT(lp, prev);
    prev = lp;
  }
  EXPECT_THROW(step_log_prob(mu, mu, 0.0), InputError);
}

TEST(Grpo, GroupShapeAndDeterminism) {
  Rng rng(1);
  const auto w = tiny_planner(rng);
  const std::vector<double> cond{0.1, -0.4, 0.9, 0.0};
  GrpoConfig cfg;
  cfg.group_size = 5;
  const RewardFn reward = [](std::span<const double> z) { return std::exp(-norm2(z)); };
  Rng a(7), b(7);
  const auto g1 = group_sample(w, cond, reward, cfg, a);
  const auto g2 = group_sample(w, cond, reward, cfg, b);
  ASSERT_EQ(g1.chains.size(), 5u);
  for (const auto& c : g1.chains) EXPECT_EQ(c.steps(), cfg.schedule.steps);
  EXPECT_EQ(g1.rewards, g2.rewards);
  EXPECT_EQ(g1.advantages, g2.advantages);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(g1.chains[i].states, g2.chains[i].states);
}

TEST(Grpo, ZeroNoiseGroupIsDegenerate) {
  Rng rng(2);
  const auto w = tiny_planner(rng);
  const std::vector<double> cond{0.5, 0.5, -0.5, 1.0};
  GrpoConfig cfg;
  cfg.schedule.a = 0.0;
  const RewardFn reward = [](std::span<const double> z) { return -norm2(z); };
  Rng srng(3);
  const auto g = group_sample(w, cond, reward, cfg, srng);
  for (const auto& c : g.chains) EXPECT_EQ(c.states, g.chains[0].states);
  for (double a : g.advantages) EXPECT_EQ(a, 0.0);
  auto grad = nn::zeros_like(w);
  EXPECT_EQ(rl_loss(g, w, cond, cfg, grad), 0.0);
  for (const auto* p : nn::param_list(std::as_const(grad)))
    for (double v : p->value) EXPECT_EQ(v, 0.0);
}

TEST(Grpo, RlLossHandComputation) {
  Rng rng(4);
  const auto w = tiny_planner(rng, 3, 2);
  const std::vector<double> cond{0.2, -0.1, 0.3};
  GrpoConfig cfg;
  cfg.gamma = 1.0;
  cfg.schedule = {0.4, 1e-3, 0.9, 1};
  const double t = 0.9, dt = cfg.schedule.grid().dt();
  GroupRollout g;
  const std::vector<std::vector<double>> starts{{0.3, -0.7}, {1.1, 0.2}};
  const std::vector<std::vector<double>> ends{{0.1, -0.2}, {0.4, 0.6}};
  for (int i = 0; i < 2; ++i) {
    DenoisingChain c;
    c.times = {t, t + dt};
    c.states = {starts[static_cast<std::size_t>(i)], ends[static_cast<std::size_t>(i)]};
    c.means = {ends[static_cast<std::size_t>(i)]};
    c.scales = {1.0};
    g.chains.push_back(c);
  }
  g.advantages = {0.8, -1.3};
  // Independent recomputation of the Gaussian policy step.
  const double sig = cfg.schedule.a * std::sqrt(t / (1.0 - t));
  double expect = 0.0;
  for (int i = 0; i < 2; ++i) {
    const auto& x = starts[static_cast<std::size_t>(i)];
    const auto v = planner_velocity(w, cond, x, t);
    double sq = 0.0;
    for (int k = 0; k < 2; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      const double mu = x[uk] * (1.0 + sig * sig * dt / (2.0 * t)) + v[uk] * (1.0 + sig * sig * (1.0 - t) / (2.0 * t)) * dt;
      sq += (ends[static_cast<std::size_t>(i)][uk] - mu) * (ends[static_cast<std::size_t>(i)][uk] - mu);
    }
    const double s = sig * std::sqrt(std::abs(dt));
    const double lp = -sq / (2.0 * s * s) - 2.0 * std::log(s) - std::log(2.0 * std::numbers::pi);
    expect += lp * g.advantages[static_cast<std::size_t>(i)];
  }
  expect *= -0.5;
  auto grad = nn::zeros_like(w);
  EXPECT_NEAR(rl_loss(g, w, cond, cfg, grad), expect, 1e-10 * std::max(1.0, std::abs(expect)));
}

TEST(Grpo, GradientSuite) {
  EXPECT_LE(checks::grad_rl().max_rel_error, 1e-5);
  EXPECT_LE(checks::grad_il().max_rel_error, 1e-5);
}

TEST(Grpo, IlLossMatchesItsDefinition) {
  Rng rng(5);
  const auto w = tiny_planner(rng);
  const std::vector<double> cond{0.0, 0.1, 0.2, 0.3};
  const std::vector<double> x0{0.5, -0.5, 0.25, 1.0};
  const std::vector<double> xt{0.9, 0.1, -0.3, 0.2};
  const double t = 0.4;
  auto grad = nn::zeros_like(w);
  const double l = il_loss(w, cond, x0, xt, t, 1e-3, grad);
  const auto v = planner_velocity(w, cond, xt, t);
  double expect = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double d = v[i] - (xt[i] - x0[i]) / t;
    expect += d * d / 4.0;
  }
  EXPECT_NEAR(l, expect, 1e-12);
}

TEST(Grpo, OneStepMovesLogProbsWithTheAdvantage) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    auto w = tiny_planner(rng, 3, 4);
    const std::vector<double> cond{0.4, -0.2, 0.1};
    GrpoConfig cfg;
    cfg.group_size = 2;
    cfg.schedule.steps = 1;
    const RewardFn reward = [](std::span<const double> z) { return z[0]; };
    Rng srng(seed);
    const auto g = group_sample(w, cond, reward, cfg, srng);
    ASSERT_EQ(std::abs(g.advantages[0]), 1.0);
    auto log_prob = [&](const PlannerWeights& p, const DenoisingChain& c) {
      const double t = c.times[0], dt = cfg.schedule.grid().dt();
      const auto v = planner_velocity(p, cond, c.states[0], t);
      const auto st = sde_step(c.states[0], v, t, dt, cfg.schedule.a, cfg.schedule.t_min, cfg.schedule.t_max);
      return step_log_prob(c.states[1], st.mean, st.scale);
    };
    const double before0 = log_prob(w, g.chains[0]), before1 = log_prob(w, g.chains[1]);
    auto grad = nn::zeros_like(w);
    rl_loss(g, w, cond, cfg, grad);
    auto params = nn::param_list(w);
    const auto grads = nn::param_list(std::as_const(grad));
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t k = 0; k < params[i]->value.size(); ++k) params[i]->value[k] -= 1e-4 * grads[i]->value[k];
    const double d0 = log_prob(w, g.chains[0]) - before0, d1 = log_prob(w, g.chains[1]) - before1;
    EXPECT_GT(d0 * g.advantages[0], 0.0) << seed;
    EXPECT_GT(d1 * g.advantages[1], 0.0) << seed;
  }
}

TEST(Grpo, PolicyGradientStepRaisesReward) {
  // Reward prefers the first coordinate near +1; a few plain gradient steps on L_rl must help.
  Rng rng(6);
  auto w = tiny_planner(rng, 2, 2);
  const std::vector<double> cond{0.3, -0.3};
  GrpoConfig cfg;
  cfg.group_size = 16;
  cfg.lambda_il = 0.0;
  const RewardFn reward = [](std::span<const double> z) { return -(z[0] - 1.0) * (z[0] - 1.0); };
  auto mean_reward = [&](const PlannerWeights& p) {
    Rng r(99);
    double s = 0.0;
    for (int i = 0; i < 40; ++i) {
      const auto g = group_sample(p, cond, reward, cfg, r);
      for (double v : g.rewards) s += v;
    }
    return s / (40.0 * cfg.group_size);
  };
  const double before = mean_reward(w);
  nn::Adam opt(nn::param_list(w), {3e-3});
  Rng srng(11);
  for (int it = 0; it < 150; ++it) {
    const auto g = group_sample(w, cond, reward, cfg, srng);
    auto grad = nn::zeros_like(w);
    rl_loss(g, w, cond, cfg, grad);
    opt.step(nn::param_list(std::as_const(grad)));
  }
  EXPECT_GT(mean_reward(w), before);
}

}  // namespace
}  // namespace wmdrive
