#include "wmdrive/train.hpp"

#include <cmath>
#include <memory>

#include "wmdrive/errors.hpp"
#include "wmdrive/parallel.hpp"

namespace wmdrive {

void TrainConfig::validate() const {
  if (stage1_steps < 0 || stage2_iters < 0) throw ConfigError("step counts must be non-negative");
  if (!(lr1 > 0.0) || !(lr2 > 0.0)) throw ConfigError("learning rates must be positive");
  if (batch_size < 1 || stage2_batch < 1) throw ConfigError("batch sizes must be positive");
  if (window1 < 1 || window2 < 1) throw ConfigError("windows must hold at least one frame");
  if (!(t_min > 0.0 && t_min < 1.0)) throw ConfigError("t_min must lie in (0, 1)");
  if (ode_steps < 1) throw ConfigError("ode_steps must be positive");
  if (shards < 1) throw ConfigError("shards must be positive");
  grpo.validate();
}

Stage1Sample make_stage1_sample(const Scenario& sc, int window, int horizon) {
  const int first = sc.current_frame() - (window - 1);
  if (first < 0) throw InputError("stage-1 window is longer than the scenario history");
  if (first + window - 1 + horizon > sc.num_frames() - 1)
    throw InputError("stage-1 targets reach beyond the scenario horizon");
  Stage1Sample s;
  s.frames = logged_window(sc, first, window + 1);
  for (int i = 0; i < window; ++i) {
    const Pose2D origin = sc.logged_pose(first + i);
    Trajectory t;
    for (int k = 1; k <= horizon; ++k) t.waypoints.push_back(to_local(origin, sc.logged_pose(first + i + k).position()));
    s.targets.push_back(std::move(t));
  }
  return s;
}

PreparedStage1 prepare_stage1(const Model& m, const Stage1Sample& s) {
  const int n = static_cast<int>(s.targets.size());
  PreparedStage1 p;
  p.tokens = make_tokens(m, s.frames, n);
  for (int i = 0; i < n; ++i) {
    const auto& next = s.frames.obs[static_cast<std::size_t>(i) + 1];
    p.next_features.push_back(encode(m.enc, next).values);
    p.next_actions.push_back(action_token(s.frames.moves[static_cast<std::size_t>(i) + 1], s.frames.command));
    p.depth_future.push_back(canonical_scan(next, m.cfg.max_range));
    p.depth_present.push_back(canonical_scan(s.frames.obs[static_cast<std::size_t>(i)], m.cfg.max_range));
    std::array<std::vector<double>, kNumQueryClasses> sem;
    for (int c = 0; c < kNumQueryClasses; ++c)
      sem[static_cast<std::size_t>(c)] = semantic_target(next, static_cast<QueryClass>(c), m.classes);
    p.semantic.push_back(std::move(sem));
    p.flow_targets.push_back(to_flow(s.targets[static_cast<std::size_t>(i)], m.cfg.traj_scale));
  }
  return p;
}

namespace {

std::vector<double> flatten_rows(const std::vector<std::vector<double>>& rows) {
  std::vector<double> out;
  for (const auto& r : rows) out.insert(out.end(), r.begin(), r.end());
  return out;
}

void add_into(std::vector<double>& dst, const std::vector<double>& src, std::size_t offset = 0) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[offset + i] += src[i];
}

}  // namespace

Stage1Losses stage1_sample_losses(const Model& m, const PreparedStage1& s, const TrainConfig& cfg, Rng& rng,
                                  WorldModel* grad) {
  const auto& net = m.net;
  const auto n = static_cast<std::size_t>(s.tokens.frames);
  const int cond_dim = 2 * m.cfg.width;
  BackboneTape tape;
  // Output rows 2i and 2i+1 are adjacent, so the output is already the n x 2W
  // matrix of per-frame conditioning vectors.
  const auto cond = backbone_forward(net.bb, s.tokens, grad ? &tape : nullptr);
  std::vector<double> d_cond(cond.size(), 0.0);
  Stage1Losses L;

  // Draw order is fixed per frame and independent of which losses are enabled.
  const auto X = static_cast<std::size_t>(2 * m.cfg.horizon);
  const auto D = static_cast<std::size_t>(m.cfg.feature_dim);
  std::vector<double> x1(n * X), eps(n * D), t_traj(n), t_img(n);
  for (std::size_t i = 0; i < n; ++i) {
    fill_normal(rng, std::span<double>(x1.data() + i * X, X));
    t_traj[i] = uniform(rng, cfg.t_min, 1.0);
    fill_normal(rng, std::span<double>(eps.data() + i * D, D));
    t_img[i] = uniform(rng, cfg.t_min, 1.0);
  }

  const auto x0 = flatten_rows(s.flow_targets);
  if (grad) {
    const auto r = traj_loss(net.planner, cond, x0, x1, t_traj, grad->planner);
    L.traj = r.loss;
    add_into(d_cond, r.d_cond);
  } else {
    std::vector<double> xt(x0.size()), target(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) {
      const double t = t_traj[i / X];
      xt[i] = (1.0 - t) * x0[i] + t * x1[i];
      target[i] = x1[i] - x0[i];
    }
    L.traj = squared_error(planner_velocity(net.planner, cond, xt, t_traj), target).loss;
  }

  const auto a_next = flatten_rows(s.next_actions);
  if (cfg.use_img) {
    ImgHead scratch;
    if (!grad) scratch = nn::zeros_like(net.heads.img);
    const auto r = img_flow_loss(net.heads.img, cond, a_next, flatten_rows(s.next_features), t_img, eps,
                                 grad ? grad->heads.img : scratch);
    L.img = r.loss;
    if (grad) add_into(d_cond, r.d_cond);
  }

  if (cfg.use_depth) {
    DepthTape dt;
    const auto pred = depth_head(net.heads.depth, cond, a_next, grad ? &dt : nullptr);
    const auto target = flatten_rows(cfg.depth_target == DepthTarget::kFuture ? s.depth_future : s.depth_present);
    const auto dl = depth_loss(pred, target, m.cfg.lambda_c);
    L.depth = dl.loss;
    if (grad) add_into(d_cond, depth_head_backward(net.heads.depth, dt, pred, dl, cond_dim, grad->heads.depth));
  }

  if (cfg.use_sem) {
    // One row per (class, frame); the loss is the mean over both.
    std::vector<double> conds, actions, texts, targets;
    for (int c = 0; c < kNumQueryClasses; ++c) {
      const auto& h = m.classes.at(static_cast<QueryClass>(c));
      conds.insert(conds.end(), cond.begin(), cond.end());
      actions.insert(actions.end(), a_next.begin(), a_next.end());
      for (std::size_t i = 0; i < n; ++i) {
        texts.insert(texts.end(), h.begin(), h.end());
        const auto& t = s.semantic[i][static_cast<std::size_t>(c)];
        targets.insert(targets.end(), t.begin(), t.end());
      }
    }
    nn::Mlp::Tape st;
    const auto pred = semantic_head(net.heads.sem, conds, actions, texts, grad ? &st : nullptr);
    const auto sl = semantic_loss(pred, targets);
    L.sem = sl.loss;
    if (grad) {
      const auto d = semantic_head_backward(net.heads.sem, st, sl.d_input, cond_dim, grad->heads.sem);
      for (std::size_t i = 0; i < d.size(); ++i) d_cond[i % cond.size()] += d[i];
    }
  }
  if (grad) backbone_backward(net.bb, s.tokens, tape, d_cond, grad->bb);

  L.total = L.traj + L.img + L.depth + L.sem;
  if (!std::isfinite(L.total)) throw NumericalError("stage-1 loss is not finite");
  return L;
}

Stage2Sample make_stage2_sample(const Scenario& sc, int window, const TrajScale& scale) {
  const int first = sc.current_frame() - (window - 1);
  if (first < 0) throw InputError("stage-2 window is longer than the scenario history");
  Stage2Sample s;
  s.frames = logged_window(sc, first, window);
  s.expert = sc.expert_future;
  auto world = std::make_shared<const Scenario>(sc);
  s.reward = [world, scale](std::span<const double> z) {
    return reward(rollout_controller(*world, from_flow(z, scale)), world->expert_future);
  };
  return s;
}

PreparedStage2 prepare_stage2(const Model& m, const Stage2Sample& s) {
  return {plan_condition(m, s.frames), to_flow(s.expert, m.cfg.traj_scale), s.reward};
}

Trainer::Trainer(Model& model, const TrainConfig& cfg, int stage, int workers)
    : model_(model), cfg_(cfg), stage_(stage), workers_(workers) {
  cfg_.validate();
  if (stage != 1 && stage != 2) throw ConfigError("stage must be 1 or 2");
  if (stage == 1)
    adam_ = nn::Adam(nn::param_list(model_.net), {cfg_.lr1});
  else
    adam_ = nn::Adam(nn::param_list(model_.net.planner), {cfg_.lr2});
}

void Trainer::set_step(std::int64_t s) {
  step_ = s;
  adam_.set_steps(s);
}

namespace {

// Contiguous slot ranges; the partition depends only on batch and shard counts.
std::pair<std::size_t, std::size_t> shard_range(std::size_t shard, std::size_t shards, std::size_t batch) {
  return {shard * batch / shards, (shard + 1) * batch / shards};
}

template <class T>
void scale_all(T& m, double k) {
  m.for_each_param([k](nn::Param& p) {
    for (auto& v : p.value) v *= k;
  });
}

std::vector<std::size_t> draw_batch(Rng& rng, std::size_t n, std::size_t batch) {
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> idx(batch);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

}  // namespace

Stage1Losses Trainer::stage1_step(const std::vector<PreparedStage1>& data) {
  if (stage_ != 1) throw ConfigError("stage1_step on a stage-2 trainer");
  if (data.empty()) throw InputError("empty stage-1 dataset");
  const auto B = static_cast<std::size_t>(cfg_.batch_size);
  const std::size_t S = std::min<std::size_t>(static_cast<std::size_t>(cfg_.shards), B);
  Rng brng = make_rng({stream::kStage1, cfg_.seed, static_cast<std::uint64_t>(step_)});
  const auto idx = draw_batch(brng, data.size(), B);

  std::vector<WorldModel> grads(S);
  std::vector<Stage1Losses> losses(B);
  parallel_for(S, workers_, [&](std::size_t s) {
    grads[s] = nn::zeros_like(model_.net);
    const auto [lo, hi] = shard_range(s, S, B);
    for (std::size_t j = lo; j < hi; ++j) {
      Rng rng = make_rng({stream::kStage1, cfg_.seed, static_cast<std::uint64_t>(step_), j});
      losses[j] = stage1_sample_losses(model_, data[idx[j]], cfg_, rng, &grads[s]);
    }
  });
  for (std::size_t s = 1; s < S; ++s) nn::accumulate(grads[0], grads[s]);
  scale_all(grads[0], 1.0 / static_cast<double>(B));
  adam_.step(nn::param_list(std::as_const(grads[0])));
  ++step_;

  Stage1Losses mean;
  for (const auto& l : losses) {
    mean.traj += l.traj / B;
    mean.img += l.img / B;
    mean.depth += l.depth / B;
    mean.sem += l.sem / B;
  }
  mean.total = mean.traj + mean.img + mean.depth + mean.sem;
  return mean;
}

Stage2Stats Trainer::stage2_step(const std::vector<PreparedStage2>& data) {
  if (stage_ != 2) throw ConfigError("stage2_step on a stage-1 trainer");
  if (data.empty()) throw InputError("empty stage-2 dataset");
  const auto B = static_cast<std::size_t>(cfg_.stage2_batch);
  const std::size_t S = std::min<std::size_t>(static_cast<std::size_t>(cfg_.shards), B);
  Rng brng = make_rng({stream::kStage2, cfg_.seed, static_cast<std::uint64_t>(step_)});
  const auto idx = draw_batch(brng, data.size(), B);

  std::vector<PlannerWeights> grads(S);
  std::vector<Stage2Stats> stats(B);
  const auto& planner = model_.net.planner;
  parallel_for(S, workers_, [&](std::size_t s) {
    grads[s] = nn::zeros_like(planner);
    const auto [lo, hi] = shard_range(s, S, B);
    for (std::size_t j = lo; j < hi; ++j) {
      Rng rng = make_rng({stream::kStage2, cfg_.seed, static_cast<std::uint64_t>(step_), j});
      const auto& d = data[idx[j]];
      const auto group = group_sample(planner, d.cond, d.reward, cfg_.grpo, rng);
      const auto gl = grpo_loss(group, planner, d.cond, d.x0, cfg_.grpo, rng, grads[s]);
      Stage2Stats& st = stats[j];
      double mean = 0.0;
      for (double r : group.rewards) mean += r;
      mean /= static_cast<double>(group.rewards.size());
      double var = 0.0;
      for (double r : group.rewards) var += (r - mean) * (r - mean);
      st.mean_reward = mean;
      st.reward_std = std::sqrt(var / static_cast<double>(group.rewards.size()));
      st.rl_loss = gl.rl;
      st.il_loss = gl.il;
    }
  });
  for (std::size_t s = 1; s < S; ++s) nn::accumulate(grads[0], grads[s]);
  scale_all(grads[0], 1.0 / static_cast<double>(B));
  const double total = [&] {
    double t = 0.0;
    for (const auto& st : stats) t += st.rl_loss + cfg_.grpo.lambda_il * st.il_loss;
    return t;
  }();
  if (!std::isfinite(total)) throw NumericalError("stage-2 loss is not finite");
  adam_.step(nn::param_list(std::as_const(grads[0])));
  ++step_;

  Stage2Stats mean;
  for (const auto& st : stats) {
    mean.mean_reward += st.mean_reward / B;
    mean.reward_std += st.reward_std / B;
    mean.rl_loss += st.rl_loss / B;
    mean.il_loss += st.il_loss / B;
  }
  return mean;
}

}  // namespace wmdrive
