#include "checks.hpp"

#include <cmath>
#include <cstring>
#include <functional>

#include "wmdrive/backbone.hpp"
#include "wmdrive/forecast_heads.hpp"
#include "wmdrive/grpo.hpp"
#include "wmdrive/nn.hpp"
#include "wmdrive/planner.hpp"
#include "wmdrive/rng.hpp"
#include "wmdrive/train.hpp"

namespace wmdrive::checks {

namespace {

constexpr double kStep = 1e-6;

std::vector<double> randn(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  fill_normal(rng, v);
  for (auto& x : v) x *= scale;
  return v;
}

double rel_error(const std::vector<double>& a, const std::vector<double>& n) {
  double d = 0.0, na = 0.0, nn_ = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn_ += n[i] * n[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nn_), 1e-8});
}

// Samples up to `per_tensor` coordinates of every tensor and compares the analytic
// gradient with central differences of loss().
template <class T>
void check_params(T& weights, const T& analytic, const std::function<double()>& loss, GradReport& rep,
                  std::uint64_t seed, std::size_t per_tensor = 12) {
  auto ps = nn::param_list(weights);
  auto gs = nn::param_list(analytic);
  Rng rng(seed);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    auto& v = ps[i]->value;
    std::vector<std::size_t> idx;
    if (v.size() <= per_tensor) {
      for (std::size_t k = 0; k < v.size(); ++k) idx.push_back(k);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
      for (std::size_t k = 0; k < per_tensor; ++k) idx.push_back(pick(rng));
    }
    std::vector<double> a, n;
    for (std::size_t k : idx) {
      const double orig = v[k];
      v[k] = orig + kStep;
      const double up = loss();
      v[k] = orig - kStep;
      const double down = loss();
      v[k] = orig;
      n.push_back((up - down) / (2 * kStep));
      a.push_back(gs[i]->value[k]);
    }
    rep.max_rel_error = std::max(rep.max_rel_error, rel_error(a, n));
    ++rep.tensors;
  }
}

void check_vector(std::vector<double>& x, const std::vector<double>& analytic, const std::function<double()>& loss,
                  GradReport& rep) {
  std::vector<double> n(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = x[k];
    x[k] = orig + kStep;
    const double up = loss();
    x[k] = orig - kStep;
    const double down = loss();
    x[k] = orig;
    n[k] = (up - down) / (2 * kStep);
  }
  rep.max_rel_error = std::max(rep.max_rel_error, rel_error(analytic, n));
  ++rep.tensors;
}

PlannerWeights tiny_planner(Rng& rng, int cond_dim = 6) {
  PlannerConfig pc;
  pc.cond_dim = cond_dim;
  pc.traj_dim = 4;
  pc.hidden = 8;
  pc.time_dim = 4;
  auto w = init_planner(pc, rng);
  // Larger last layer so the velocity is not near zero.
  for (auto& v : w.net.layers.back().w.value) v *= 4.0;
  return w;
}

HeadsConfig tiny_heads_config() {
  HeadsConfig hc;
  hc.cond_dim = 6;
  hc.action_dim = 6;
  hc.feature_dim = 5;
  hc.num_rays = 6;
  hc.embed_dim = 3;
  hc.hidden = 8;
  hc.time_dim = 4;
  hc.c_max = 100.0;
  hc.lambda_c = 0.1;
  return hc;
}

BackboneConfig tiny_backbone_config() {
  BackboneConfig bc;
  bc.feature_dim = 8;
  bc.action_dim = 6;
  bc.width = 16;
  bc.layers = 1;
  bc.heads = 2;
  bc.max_frames = 4;
  bc.ffn_mult = 2;
  return bc;
}

}  // namespace

GradReport grad_backbone() {
  GradReport rep{"backbone"};
  Rng rng(11);
  const auto bc = tiny_backbone_config();
  auto w = init_backbone(bc, rng);
  TokenSequence seq;
  seq.frames = 2;
  seq.features = randn(rng, 2 * 8);
  seq.actions = randn(rng, 2 * 6);
  const auto R = randn(rng, 4 * 16);
  auto loss = [&] {
    const auto out = backbone_forward(w, seq);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * R[i];
    return s;
  };
  BackboneTape tape;
  backbone_forward(w, seq, &tape);
  auto g = nn::zeros_like(w);
  const auto din = backbone_backward(w, seq, tape, R, g);
  check_params(w, g, loss, rep, 1, 24);
  check_vector(seq.features, din.features, loss, rep);
  check_vector(seq.actions, din.actions, loss, rep);
  return rep;
}

GradReport grad_traj() {
  GradReport rep{"L_traj"};
  Rng rng(12);
  auto w = tiny_planner(rng);
  const std::size_t rows = 3;
  auto cond = randn(rng, rows * 6);
  const auto x0 = randn(rng, rows * 4, 0.5);
  const auto x1 = randn(rng, rows * 4);
  const std::vector<double> t{0.2, 0.55, 0.9};
  auto loss = [&] {
    auto g = nn::zeros_like(w);
    return traj_loss(w, cond, x0, x1, t, g).loss;
  };
  auto g = nn::zeros_like(w);
  const auto r = traj_loss(w, cond, x0, x1, t, g);
  check_params(w, g, loss, rep, 2);
  check_vector(cond, r.d_cond, loss, rep);
  return rep;
}

GradReport grad_img() {
  GradReport rep{"L_img"};
  Rng rng(13);
  const auto hc = tiny_heads_config();
  auto heads = init_heads(hc, rng);
  auto& w = heads.img;
  for (auto& v : w.net.layers.back().w.value) v *= 4.0;
  const std::size_t rows = 2;
  auto cond = randn(rng, rows * 6);
  const auto da = randn(rng, rows * 6);
  const auto f = randn(rng, rows * 5);
  const auto eps = randn(rng, rows * 5);
  const std::vector<double> t{0.3, 0.8};
  auto loss = [&] {
    auto g = nn::zeros_like(w);
    return img_flow_loss(w, cond, da, f, t, eps, g).loss;
  };
  auto g = nn::zeros_like(w);
  const auto r = img_flow_loss(w, cond, da, f, t, eps, g);
  check_params(w, g, loss, rep, 3);
  check_vector(cond, r.d_cond, loss, rep);
  return rep;
}

GradReport grad_depth() {
  GradReport rep{"L_d"};
  Rng rng(14);
  const auto hc = tiny_heads_config();
  auto heads = init_heads(hc, rng);
  auto& w = heads.depth;
  for (auto& v : w.net.layers.back().w.value) v *= 3.0;
  const std::size_t rows = 2;
  auto cond = randn(rng, rows * 6);
  const auto da = randn(rng, rows * 6);
  std::vector<double> target(rows * 6);
  for (auto& v : target) v = uniform(rng, 0.05, 1.0);
  auto loss = [&] { return depth_loss(depth_head(w, cond, da), target, hc.lambda_c).loss; };
  DepthTape tape;
  const auto pred = depth_head(w, cond, da, &tape);
  const auto dl = depth_loss(pred, target, hc.lambda_c);
  auto g = nn::zeros_like(w);
  const auto dcond = depth_head_backward(w, tape, pred, dl, hc.cond_dim, g);
  check_params(w, g, loss, rep, 4);
  check_vector(cond, dcond, loss, rep);
  return rep;
}

GradReport grad_sem() {
  GradReport rep{"L_s"};
  Rng rng(15);
  const auto hc = tiny_heads_config();
  auto heads = init_heads(hc, rng);
  auto& w = heads.sem;
  const std::size_t rows = 2;
  auto cond = randn(rng, rows * 6);
  const auto da = randn(rng, rows * 6);
  const auto h = randn(rng, rows * 3);
  const auto target = randn(rng, rows * 6 * 3, 0.5);
  auto loss = [&] { return semantic_loss(semantic_head(w, cond, da, h), target).loss; };
  nn::Mlp::Tape tape;
  const auto pred = semantic_head(w, cond, da, h, &tape);
  const auto sl = semantic_loss(pred, target);
  auto g = nn::zeros_like(w);
  const auto dcond = semantic_head_backward(w, tape, sl.d_input, hc.cond_dim, g);
  check_params(w, g, loss, rep, 5);
  check_vector(cond, dcond, loss, rep);
  return rep;
}

GradReport grad_rl() {
  GradReport rep{"L_rl"};
  Rng rng(16);
  auto w = tiny_planner(rng);
  const auto cond = randn(rng, 6);
  GrpoConfig cfg;
  cfg.group_size = 4;
  cfg.schedule.steps = 3;
  const RewardFn reward = [](std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return std::exp(-s);
  };
  Rng srng(99);
  const auto group = group_sample(w, cond, reward, cfg, srng);
  auto loss = [&] {
    auto g = nn::zeros_like(w);
    return rl_loss(group, w, cond, cfg, g);
  };
  auto g = nn::zeros_like(w);
  rl_loss(group, w, cond, cfg, g);
  check_params(w, g, loss, rep, 6);
  return rep;
}

GradReport grad_il() {
  GradReport rep{"L_il"};
  Rng rng(17);
  auto w = tiny_planner(rng);
  const auto cond = randn(rng, 6);
  const auto x0 = randn(rng, 4, 0.5);
  const auto xt = randn(rng, 3 * 4);
  const std::vector<double> t{0.1, 0.5, 0.85};
  auto loss = [&] {
    auto g = nn::zeros_like(w);
    return il_loss(w, cond, x0, xt, t, 1e-3, g);
  };
  auto g = nn::zeros_like(w);
  il_loss(w, cond, x0, xt, t, 1e-3, g);
  check_params(w, g, loss, rep, 7);
  return rep;
}

GradReport grad_stage1_total() {
  GradReport rep{"stage-1 total"};
  ModelConfig mc;
  mc.num_rays = 8;
  mc.horizon = 3;
  mc.feature_dim = 8;
  mc.width = 8;
  mc.layers = 1;
  mc.heads = 2;
  mc.max_frames = 4;
  mc.ffn_mult = 2;
  mc.planner_hidden = 8;
  mc.head_hidden = 8;
  mc.time_dim = 4;
  mc.embed_dim = 3;
  Model m = init_model(mc);
  ScenarioParams sp;
  sp.sensor.num_rays = 8;
  sp.horizon = 3;
  sp.history_frames = 3;
  const Scenario sc = build_scenario(5, sp);
  const auto prepared = prepare_stage1(m, make_stage1_sample(sc, 2, mc.horizon));
  TrainConfig tc;
  tc.window1 = 2;
  auto loss = [&] {
    Rng rng(123);
    return stage1_sample_losses(m, prepared, tc, rng, nullptr).total;
  };
  auto g = nn::zeros_like(m.net);
  Rng rng(123);
  stage1_sample_losses(m, prepared, tc, rng, &g);
  check_params(m.net, g, loss, rep, 8, 6);
  return rep;
}

int causality_violations(int sequences, std::uint64_t seed) {
  Rng rng(seed);
  BackboneConfig bc = tiny_backbone_config();
  bc.width = 32;
  bc.layers = 2;
  bc.heads = 4;
  bc.max_frames = 6;
  const auto w = init_backbone(bc, rng);
  int bad = 0;
  for (int s = 0; s < sequences; ++s) {
    TokenSequence seq;
    seq.frames = 6;
    seq.features = randn(rng, 6 * 8);
    seq.actions = randn(rng, 6 * 6);
    const auto base = backbone_forward(w, seq);
    std::uniform_int_distribution<int> pick(1, 5);
    const int j = pick(rng);  // perturb frames j.. (0-based)
    TokenSequence p = seq;
    for (std::size_t k = static_cast<std::size_t>(j) * 8; k < p.features.size(); ++k) p.features[k] += 1.0 + k;
    for (std::size_t k = static_cast<std::size_t>(j) * 6; k < p.actions.size(); ++k) p.actions[k] -= 0.5;
    const auto out = backbone_forward(w, p);
    const std::size_t keep = static_cast<std::size_t>(2 * j) * 32;
    for (std::size_t k = 0; k < keep; ++k)
      if (std::memcmp(&out[k], &base[k], sizeof(double)) != 0) {
        ++bad;
        break;
      }
  }
  return bad;
}

int prefix_violations(std::uint64_t seed) {
  Rng rng(seed);
  const auto bc = tiny_backbone_config();
  const auto w = init_backbone(bc, rng);
  TokenSequence seq;
  seq.frames = 3;
  seq.features = randn(rng, 3 * 8);
  seq.actions = randn(rng, 3 * 6);
  TokenSequence pre = seq;
  pre.frames = 2;
  pre.features.resize(2 * 8);
  pre.actions.resize(2 * 6);
  const auto a = backbone_forward(w, seq);
  const auto b = backbone_forward(w, pre);
  int bad = 0;
  for (std::size_t k = 0; k < b.size(); ++k)
    if (std::memcmp(&a[k], &b[k], sizeof(double)) != 0) ++bad;
  return bad;
}

SdeCalibration sde_noise_calibration(int draws, double a, std::uint64_t seed) {
  NoiseSchedule sched;
  sched.a = a;
  sched.t_min = 1e-3;
  sched.t_max = 0.95;
  sched.steps = 8;
  const int dim = 16;
  const VelocityFn zero = [](std::span<const double> x, double) { return std::vector<double>(x.size(), 0.0); };
  const auto grid = sched.grid();
  const int chains = (draws + dim - 1) / dim;
  std::vector<double> sum(static_cast<std::size_t>(sched.steps), 0.0), sum2(sum.size(), 0.0);
  Rng rng(seed);
  for (int c = 0; c < chains; ++c) {
    const auto chain = sample_sde(zero, dim, sched, rng);
    for (int k = 0; k < sched.steps; ++k) {
      // With v = 0 the conditional mean is x_t (1 + sigma^2 dt / (2 t)).
      const double t = grid.at(k);
      const double s = a * std::sqrt(t / (1.0 - t));
      const double cx = 1.0 + s * s * grid.dt() / (2.0 * t);
      const auto& x = chain.states[static_cast<std::size_t>(k)];
      const auto& y = chain.states[static_cast<std::size_t>(k) + 1];
      for (int i = 0; i < dim; ++i) {
        const double r = y[static_cast<std::size_t>(i)] - cx * x[static_cast<std::size_t>(i)];
        sum[static_cast<std::size_t>(k)] += r;
        sum2[static_cast<std::size_t>(k)] += r * r;
      }
    }
  }
  SdeCalibration out;
  out.draws = chains * dim;
  const double n = out.draws;
  for (int k = 0; k < sched.steps; ++k) {
    const double t = grid.at(k);
    const double s = a * std::sqrt(t / (1.0 - t));
    const double mean = sum[static_cast<std::size_t>(k)] / n;
    const double var = sum2[static_cast<std::size_t>(k)] / n - mean * mean;
    out.worst_rel_error = std::max(out.worst_rel_error, std::abs(var / (s * s * std::abs(grid.dt())) - 1.0));
  }
  return out;
}

double confidence_argmin(double e, double lambda_c, double c_max) {
  // Build a one-ray prediction whose confidence is set directly, then golden-section
  // search the implemented loss over c in (0, c_max].
  auto loss_at = [&](double c) {
    DepthPrediction p;
    p.rows = 1;
    p.d_hat = {0.5 + e, 0.5 + e};
    p.c_hat = {c, c};
    const std::vector<double> target{0.5, 0.5};
    return depth_loss(p, target, lambda_c).loss;
  };
  double lo = 1e-9, hi = c_max;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
  double f1 = loss_at(x1), f2 = loss_at(x2);
  for (int it = 0; it < 300; ++it) {
    if (f1 < f2) {
      hi = x2, x2 = x1, f2 = f1;
      x1 = hi - phi * (hi - lo);
      f1 = loss_at(x1);
    } else {
      lo = x1, x1 = x2, f1 = f2;
      x2 = lo + phi * (hi - lo);
      f2 = loss_at(x2);
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace wmdrive::checks
