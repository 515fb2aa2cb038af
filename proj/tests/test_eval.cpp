#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "wmdrive/errors.hpp"
#include "wmdrive/eval.hpp"
#include "wmdrive/rng.hpp"

namespace wmdrive {
namespace {

namespace fs = std::filesystem;

TEST(Eval, AggregateReferenceValues) {
  EXPECT_EQ(aggregate({1, 1, 1, 1, 1}), 1.0);
  EXPECT_EQ(aggregate({0, 1, 1, 1, 1}), 0.0);
  EXPECT_EQ(aggregate({0, 0.3, 0.2, 1, 0}), 0.0);
  EXPECT_NEAR(aggregate({1, 1, 0.5, 1, 1}), 9.5 / 12.0, 1e-15);
  EXPECT_NEAR(aggregate({1, 0.5, 1, 0, 1}), 0.5 * 7.0 / 12.0, 1e-15);
}

TEST(Eval, AggregateIsBoundedAndMonotone) {
  Rng rng(5);
  auto u = [&] { return uniform(rng, 0.0, 1.0); };
  for (int i = 0; i < 2000; ++i) {
    SubScores s{std::round(u()), u(), u(), std::round(u()), std::round(u())};
    const double a = aggregate(s);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
    for (int f = 0; f < 5; ++f) {
      SubScores t = s;
      double* fields[] = {&t.nc, &t.dac, &t.ep, &t.ttc, &t.c};
      *fields[f] = std::min(1.0, *fields[f] + 0.25);
      EXPECT_GE(aggregate(t), a);
    }
  }
}

TEST(Eval, ExpertScoresPerfectly) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto sc = build_scenario(seed, ScenarioParams{});
    const auto s = score_scenario(sc, sc.expert_future);
    EXPECT_EQ(s.sub.nc, 1.0) << seed;
    EXPECT_EQ(s.sub.dac, 1.0) << seed;
    EXPECT_EQ(s.sub.ttc, 1.0) << seed;
    EXPECT_EQ(s.sub.c, 1.0) << seed;
    EXPECT_GE(s.sub.ep, 0.99) << seed;
  }
}

TEST(Eval, StaticObstacleAheadIsHit) {
  auto sc = build_scenario(11, ScenarioParams{});
  sc.agents.clear();
  const Pose2D& e = sc.ego_init;
  const double ahead = sc.ego.length / 2.0 + 3.0 + 2.25;
  Agent a;
  a.kind = AgentKind::kVehicle;
  a.length = 4.5;
  a.schedule.assign(static_cast<std::size_t>(sc.num_frames()),
                    Pose2D{e.x + ahead * std::cos(e.yaw), e.y + ahead * std::sin(e.yaw), e.yaw});
  sc.agents.push_back(a);
  Trajectory straight;
  for (int k = 1; k <= sc.horizon(); ++k) straight.waypoints.push_back({sc.ego_speed * sc.frame_dt * k, 0.0});
  const auto s = score_scenario(sc, straight);
  EXPECT_EQ(s.sub.nc, 0.0);
  EXPECT_EQ(s.aggregate, 0.0);
}

TEST(Eval, ZeroMotionInAClearScene) {
  auto sc = build_scenario(12, ScenarioParams{});
  sc.agents.clear();
  const auto s = score_scenario(sc, zero_planner(sc.horizon())(sc));
  EXPECT_EQ(s.sub.nc, 1.0);
  // Braking from the initial speed still covers a little ground.
  EXPECT_LT(s.sub.ep, 0.2);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

TEST(Eval, ReportsAreDeterministic) {
  std::vector<Scenario> sc;
  for (std::uint64_t s = 0; s < 6; ++s) sc.push_back(build_scenario(s, ScenarioParams{}));
  const auto dir = fs::temp_directory_path() / "wmdrive_eval_report";
  fs::remove_all(dir);
  const auto planner = constant_velocity_planner(8, 0.5);
  auto r1 = run_suite(planner, sc, 1);
  auto r2 = run_suite(planner, sc, 3);
  write_report(r1, dir / "a");
  write_report(r2, dir / "b");
  EXPECT_EQ(slurp(dir / "a" / "scores.csv"), slurp(dir / "b" / "scores.csv"));
  EXPECT_EQ(slurp(dir / "a" / "summary.json"), slurp(dir / "b" / "summary.json"));
  EXPECT_EQ(r1.rows.size(), 6u);
  for (const auto& r : r1.rows) {
    EXPECT_GE(r.aggregate, 0.0);
    EXPECT_LE(r.aggregate, 1.0);
  }
  fs::remove_all(dir);
}

TEST(Eval, ModelPlannerIsSeeded) {
  ModelConfig mc;
  mc.feature_dim = 16;
  mc.width = 16;
  mc.layers = 1;
  mc.heads = 2;
  mc.planner_hidden = 16;
  mc.head_hidden = 16;
  mc.time_dim = 8;
  mc.embed_dim = 4;
  const Model m = init_model(mc);
  const auto sc = build_scenario(4, ScenarioParams{});
  const auto a = model_planner(m, 4, 8, 1)(sc);
  const auto b = model_planner(m, 4, 8, 1)(sc);
  const auto c = model_planner(m, 4, 8, 2)(sc);
  ASSERT_EQ(a.waypoints.size(), 8u);
  for (std::size_t k = 0; k < 8; ++k) {
    EXPECT_EQ(a.waypoints[k].x, b.waypoints[k].x);
    EXPECT_EQ(a.waypoints[k].y, b.waypoints[k].y);
  }
  bool differs = false;
  for (std::size_t k = 0; k < 8; ++k) differs |= a.waypoints[k].x != c.waypoints[k].x;
  EXPECT_TRUE(differs);
}

}  // namespace
}  // namespace wmdrive
