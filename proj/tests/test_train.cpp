#include <gtest/gtest.h>

#include <cmath>
#include <type_traits>

#include "checks.hpp"
#include "wmdrive/errors.hpp"
#include "wmdrive/eval.hpp"
#include "wmdrive/train.hpp"

namespace wmdrive {
namespace {

ModelConfig tiny_model() {
  ModelConfig mc;
  mc.feature_dim = 16;
  mc.width = 16;
  mc.layers = 1;
  mc.heads = 2;
  mc.ffn_mult = 2;
  mc.planner_hidden = 32;
  mc.head_hidden = 32;
  mc.time_dim = 8;
  mc.embed_dim = 4;
  return mc;
}

TrainConfig tiny_train() {
  TrainConfig tc;
  tc.batch_size = 4;
  tc.stage2_batch = 4;
  tc.lr1 = 1e-3;
  return tc;
}

std::vector<Scenario> scenarios(int n, std::uint64_t first = 0) {
  std::vector<Scenario> out;
  for (int i = 0; i < n; ++i) out.push_back(build_scenario(first + static_cast<std::uint64_t>(i), ScenarioParams{}));
  return out;
}

std::vector<PreparedStage1> stage1_data(const Model& m, const std::vector<Scenario>& sc, int window = 3) {
  std::vector<PreparedStage1> d;
  for (const auto& s : sc) d.push_back(prepare_stage1(m, make_stage1_sample(s, window, m.cfg.horizon)));
  return d;
}

std::vector<PreparedStage2> stage2_data(const Model& m, const std::vector<Scenario>& sc, int window = 3) {
  std::vector<PreparedStage2> d;
  for (const auto& s : sc) d.push_back(prepare_stage2(m, make_stage2_sample(s, window, m.cfg.traj_scale)));
  return d;
}

TEST(Train, GradientOfTheStage1Total) { EXPECT_LE(checks::grad_stage1_total().max_rel_error, 1e-5); }

TEST(Train, LossesAddUp) {
  Model m = init_model(tiny_model());
  const auto data = stage1_data(m, scenarios(1));
  for (int mask = 0; mask < 8; ++mask) {
    TrainConfig tc = tiny_train();
    tc.use_img = (mask & 1) != 0;
    tc.use_depth = (mask & 2) != 0;
    tc.use_sem = (mask & 4) != 0;
    Rng rng(3);
    const auto l = stage1_sample_losses(m, data[0], tc, rng, nullptr);
    const double expect = l.traj + (tc.use_img ? l.img : 0.0) + (tc.use_depth ? l.depth : 0.0) +
                          (tc.use_sem ? l.sem : 0.0);
    EXPECT_NEAR(l.total, expect, 1e-9) << mask;
  }
}

TEST(Train, OverfitsOneBatch) {
  const auto sc = scenarios(1);
  Model m = init_model(tiny_model());
  const auto data = stage1_data(m, sc);
  const auto probe = make_stage2_sample(sc[0], 3, m.cfg.traj_scale);
  auto plan_error = [&] {
    const auto plan = plan_ode(m, plan_condition(m, probe.frames), 5, 32);
    double e = 0.0;
    for (std::size_t k = 0; k < plan.waypoints.size(); ++k) e += norm(plan.waypoints[k] - probe.expert.waypoints[k]);
    return e / static_cast<double>(plan.waypoints.size());
  };
  TrainConfig tc = tiny_train();
  tc.use_img = tc.use_depth = tc.use_sem = false;
  Trainer tr(m, tc, 1, 1);
  const double before = plan_error();
  for (int s = 0; s < 200; ++s) tr.stage1_step(data);
  const double after = plan_error();
  EXPECT_LT(after, 0.5 * before) << before << " -> " << after;
}

TEST(Train, EncoderAndClassTableNeverChange) {
  Model m = init_model(tiny_model());
  const auto enc = checksum(m.enc);
  const auto table = m.classes.rows;
  const auto net = nn::checksum(m.net);
  const auto data = stage1_data(m, scenarios(2));
  Trainer tr(m, tiny_train(), 1, 1);
  for (int s = 0; s < 5; ++s) tr.stage1_step(data);
  EXPECT_EQ(checksum(m.enc), enc);
  EXPECT_EQ(m.classes.rows, table);
  EXPECT_NE(nn::checksum(m.net), net);
  EXPECT_EQ(m.enc.seed, tiny_model().encoder_seed);
}

TEST(Train, Stage2TouchesOnlyThePlanner) {
  Model m = init_model(tiny_model());
  const auto bb = nn::checksum(m.net.bb);
  const auto heads = nn::checksum(m.net.heads);
  const auto enc = checksum(m.enc);
  const auto planner = nn::checksum(m.net.planner);
  const auto data = stage2_data(m, scenarios(2));
  TrainConfig tc = tiny_train();
  tc.lr2 = 1e-3;
  Trainer tr(m, tc, 2, 1);
  for (int s = 0; s < 5; ++s) tr.stage2_step(data);
  EXPECT_EQ(nn::checksum(m.net.bb), bb);
  EXPECT_EQ(nn::checksum(m.net.heads), heads);
  EXPECT_EQ(checksum(m.enc), enc);
  EXPECT_NE(nn::checksum(m.net.planner), planner);
}

TEST(Train, WorkerCountDoesNotChangeResults) {
  const auto sc = scenarios(3);
  std::uint64_t ref1 = 0, ref2 = 0;
  for (int workers : {1, 2, 4}) {
    Model m = init_model(tiny_model());
    const auto d1 = stage1_data(m, sc);
    Trainer t1(m, tiny_train(), 1, workers);
    for (int s = 0; s < 3; ++s) t1.stage1_step(d1);
    const auto d2 = stage2_data(m, sc);
    TrainConfig tc = tiny_train();
    tc.lr2 = 1e-3;
    Trainer t2(m, tc, 2, workers);
    const auto c1 = nn::checksum(m.net);
    for (int s = 0; s < 3; ++s) t2.stage2_step(d2);
    const auto c2 = nn::checksum(m.net);
    if (workers == 1) {
      ref1 = c1;
      ref2 = c2;
    }
    EXPECT_EQ(c1, ref1) << workers;
    EXPECT_EQ(c2, ref2) << workers;
  }
}

TEST(Train, TrainingInputsExposeOnlyPermittedFields) {
  // Static: exactly these members, of these types.
  static_assert(std::is_same_v<decltype(Stage1Sample::frames), FrameWindow>);
  static_assert(std::is_same_v<decltype(Stage1Sample::targets), std::vector<Trajectory>>);
  static_assert(std::is_same_v<decltype(FrameWindow::obs), std::vector<Observation>>);
  static_assert(std::is_same_v<decltype(FrameWindow::moves), std::vector<RelativeMovement>>);
  static_assert(std::is_same_v<decltype(FrameWindow::command), NavCommand>);
  {
    auto [frames, targets] = Stage1Sample{};
    auto [obs, moves, command] = FrameWindow{};
    (void)frames, (void)targets, (void)obs, (void)moves, (void)command;
  }
  // Behavioral: scene facts that no sensor reports leave the samples unchanged.
  const Scenario base = build_scenario(3, ScenarioParams{});
  Scenario other = base;
  other.seed = 999;
  other.map.kind = other.map.kind == MapTemplate::kStraight ? MapTemplate::kSCurve : MapTemplate::kStraight;
  other.map.centerline.clear();
  other.map.drivable.clear();
  const Model m = init_model(tiny_model());
  const auto a = prepare_stage1(m, make_stage1_sample(base, 3, 8));
  const auto b = prepare_stage1(m, make_stage1_sample(other, 3, 8));
  EXPECT_EQ(a.tokens.features, b.tokens.features);
  EXPECT_EQ(a.tokens.actions, b.tokens.actions);
  EXPECT_EQ(a.flow_targets, b.flow_targets);
  EXPECT_EQ(a.depth_future, b.depth_future);
}

TEST(Train, ConfigurationErrors) {
  Model m = init_model(tiny_model());
  TrainConfig tc = tiny_train();
  EXPECT_THROW(Trainer(m, tc, 3, 1), ConfigError);
  tc.batch_size = 0;
  EXPECT_THROW(Trainer(m, tc, 1, 1), ConfigError);
  Trainer ok(m, tiny_train(), 1, 1);
  EXPECT_THROW(ok.stage1_step({}), InputError);
  EXPECT_THROW(ok.stage2_step({}), ConfigError);
}

TEST(Train, Stage2RaisesRewardOnAFixedSet) {
  const auto sc = scenarios(8, 500);
  Model m = init_model(tiny_model());
  {
    TrainConfig tc = tiny_train();
    tc.lr1 = 3e-3;
    Trainer tr(m, tc, 1, 1);
    const auto d = stage1_data(m, sc);
    for (int s = 0; s < 400; ++s) tr.stage1_step(d);
  }
  const auto data = stage2_data(m, sc);
  TrainConfig tc = tiny_train();
  tc.stage2_batch = 8;
  tc.lr2 = 3e-4;
  auto mean_reward = [&] {
    // Fixed evaluation noise: the same groups before and after.
    double s = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      Rng rng = make_rng({42, i});
      const auto g = group_sample(m.net.planner, data[i].cond, data[i].reward, tc.grpo, rng);
      for (double r : g.rewards) s += r, ++n;
    }
    return s / n;
  };
  const double before = mean_reward();
  Trainer tr(m, tc, 2, 1);
  for (int it = 0; it < 300; ++it) tr.stage2_step(data);
  const double after = mean_reward();
  EXPECT_GT(after, before) << before << " -> " << after;
}

}  // namespace
}  // namespace wmdrive
