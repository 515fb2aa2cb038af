#include "wmdrive/model.hpp"

#include <cmath>

#include "wmdrive/errors.hpp"

namespace wmdrive {

NavCommand nav_command(const Trajectory& future) {
  const auto& w = future.waypoints;
  if (w.size() < 2) return NavCommand::kStraight;
  const Vec2 d = w.back() - w[w.size() / 2];
  if (norm(d) < 0.5) return NavCommand::kStraight;
  const double heading = std::atan2(d.y, d.x);
  if (heading > 0.1) return NavCommand::kLeft;
  if (heading < -0.1) return NavCommand::kRight;
  return NavCommand::kStraight;
}

std::vector<double> action_token(const RelativeMovement& m, NavCommand cmd) {
  std::vector<double> a(kActionDim, 0.0);
  a[0] = m.dx / 10.0;
  a[1] = m.dy;
  a[2] = m.dyaw * 10.0;
  a[3 + static_cast<int>(cmd)] = 1.0;
  return a;
}

BackboneConfig ModelConfig::backbone() const {
  return {feature_dim, kActionDim, width, layers, heads, max_frames, ffn_mult};
}

PlannerConfig ModelConfig::planner() const { return {2 * width, 2 * horizon, planner_hidden, time_dim}; }

HeadsConfig ModelConfig::heads_config() const {
  return {2 * width, kActionDim, feature_dim, num_rays, embed_dim, head_hidden, time_dim, c_max, lambda_c};
}

Model init_model(const ModelConfig& cfg) {
  Model m;
  m.cfg = cfg;
  m.enc = init_encoder(cfg.encoder_seed, cfg.num_rays, kNumClasses, cfg.feature_dim, cfg.max_range);
  m.classes = make_class_table(cfg.encoder_seed, cfg.embed_dim);
  Rng rng = make_rng({stream::kInit, cfg.init_seed});
  m.net.bb = init_backbone(cfg.backbone(), rng);
  m.net.planner = init_planner(cfg.planner(), rng);
  m.net.heads = init_heads(cfg.heads_config(), rng);
  return m;
}

FrameWindow logged_window(const Scenario& sc, int first, int count) {
  if (first < 0 || count < 1 || first + count > sc.num_frames())
    throw InputError("window [" + std::to_string(first) + ", " + std::to_string(first + count) +
                     ") exceeds the scenario's " + std::to_string(sc.num_frames()) + " frames");
  FrameWindow w;
  for (int f = first; f < first + count; ++f) {
    const Pose2D pose = sc.logged_pose(f);
    w.obs.push_back(sense(sc, pose, f));
    w.moves.push_back(f == 0 ? sc.history.front().movement : relative_movement(sc.logged_pose(f - 1), pose));
  }
  w.command = nav_command(sc.expert_future);
  return w;
}

TokenSequence make_tokens(const Model& m, const FrameWindow& w, int count) {
  if (count < 1 || count > static_cast<int>(w.obs.size())) throw InputError("token count exceeds window");
  TokenSequence seq;
  seq.frames = count;
  for (int i = 0; i < count; ++i) {
    const auto f = encode(m.enc, w.obs[static_cast<std::size_t>(i)]);
    seq.features.insert(seq.features.end(), f.values.begin(), f.values.end());
    const auto a = action_token(w.moves[static_cast<std::size_t>(i)], w.command);
    seq.actions.insert(seq.actions.end(), a.begin(), a.end());
  }
  return seq;
}

std::vector<double> plan_condition(const Model& m, const FrameWindow& w) {
  const int n = static_cast<int>(w.obs.size());
  const auto out = backbone_forward(m.net.bb, make_tokens(m, w, n));
  return frame_pair(out, n - 1, m.cfg.width);
}

Trajectory plan_ode(const Model& m, const std::vector<double>& cond, std::uint64_t noise_seed, int steps) {
  Rng rng(noise_seed);
  std::vector<double> x1(static_cast<std::size_t>(2 * m.cfg.horizon));
  fill_normal(rng, x1);
  const auto z = sample_ode(velocity_fn(m.net.planner, cond), x1, {1.0, 0.0, steps});
  for (double v : z)
    if (!std::isfinite(v)) throw NumericalError("planner produced a non-finite trajectory");
  return from_flow(z, m.cfg.traj_scale);
}

RelativeMovement movement_from_plan(const Trajectory& plan) {
  if (plan.waypoints.empty()) return {};
  const Vec2 p = plan.waypoints.front();
  const double chord = norm(p) > 1e-6 ? std::atan2(p.y, p.x) : 0.0;
  return {p.x, p.y, normalize_angle(2.0 * chord)};
}

}  // namespace wmdrive
