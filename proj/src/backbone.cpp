#include "wmdrive/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wmdrive/errors.hpp"

namespace wmdrive {

void BackboneConfig::validate() const {
  if (feature_dim < 1 || action_dim < 1) throw ConfigError("backbone input sizes must be positive");
  if (width < 1 || layers < 1 || heads < 1 || max_frames < 1 || ffn_mult < 1)
    throw ConfigError("backbone sizes must be positive");
  if (width % heads != 0) throw ConfigError("backbone width must be divisible by the head count");
}

std::vector<double> FutureRepresentation::pair() const {
  std::vector<double> p(f_prime);
  p.insert(p.end(), da_prime.begin(), da_prime.end());
  return p;
}

BackboneWeights init_backbone(const BackboneConfig& cfg, Rng& rng) {
  cfg.validate();
  BackboneWeights w;
  w.cfg = cfg;
  const auto W = static_cast<std::size_t>(cfg.width);
  const auto F = W * static_cast<std::size_t>(cfg.ffn_mult);
  const double res_gain = 1.0 / std::sqrt(2.0 * cfg.layers);
  w.feat_in.init("bb.feat_in", static_cast<std::size_t>(cfg.feature_dim), W, true, rng);
  w.act_in.init("bb.act_in", static_cast<std::size_t>(cfg.action_dim), W, true, rng);
  w.pos = nn::make_param("bb.pos", {2 * static_cast<std::size_t>(cfg.max_frames), W});
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& v : w.pos.value) v = n(rng);
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = "bb.block" + std::to_string(l);
    BackboneBlock b;
    b.ln1.init(p + ".ln1", W);
    b.qkv.init(p + ".qkv", W, 3 * W, true, rng);
    b.proj.init(p + ".proj", W, W, true, rng, res_gain);
    b.ln2.init(p + ".ln2", W);
    b.ff1.init(p + ".ff1", W, F, true, rng);
    b.ff2.init(p + ".ff2", F, W, true, rng, res_gain);
    w.blocks.push_back(std::move(b));
  }
  w.ln_f.init("bb.ln_f", W);
  nn::round_params_to_float(w);
  return w;
}

namespace {

// Causal multi-head attention over rows of packed [q | k | v].
void attention_forward(const std::vector<double>& qkv, std::size_t rows, std::size_t W, std::size_t heads,
                       std::vector<double>& probs, std::vector<double>& out) {
  const std::size_t dh = W / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  probs.assign(heads * rows * rows, 0.0);
  out.assign(rows * W, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t p = 0; p < rows; ++p) {
      const double* q = qkv.data() + p * 3 * W + h * dh;
      double* a = probs.data() + (h * rows + p) * rows;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t s = 0; s <= p; ++s) {
        const double* k = qkv.data() + s * 3 * W + W + h * dh;
        a[s] = scale * nn::dot(q, k, dh);
        mx = std::max(mx, a[s]);
      }
      double z = 0.0;
      for (std::size_t s = 0; s <= p; ++s) {
        a[s] = std::exp(a[s] - mx);
        z += a[s];
      }
      const double inv = 1.0 / z;
      double* o = out.data() + p * W + h * dh;
      for (std::size_t s = 0; s <= p; ++s) {
        a[s] *= inv;
        const double* v = qkv.data() + s * 3 * W + 2 * W + h * dh;
        for (std::size_t d = 0; d < dh; ++d) o[d] += a[s] * v[d];
      }
    }
  }
}

void attention_backward(const std::vector<double>& qkv, const std::vector<double>& probs,
                        const std::vector<double>& d_out, std::size_t rows, std::size_t W, std::size_t heads,
                        std::vector<double>& d_qkv) {
  const std::size_t dh = W / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  d_qkv.assign(rows * 3 * W, 0.0);
  std::vector<double> da(rows);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t p = 0; p < rows; ++p) {
      const double* a = probs.data() + (h * rows + p) * rows;
      const double* dop = d_out.data() + p * W + h * dh;
      double sum = 0.0;
      for (std::size_t s = 0; s <= p; ++s) {
        const double* v = qkv.data() + s * 3 * W + 2 * W + h * dh;
        double* dv = d_qkv.data() + s * 3 * W + 2 * W + h * dh;
        for (std::size_t d = 0; d < dh; ++d) dv[d] += a[s] * dop[d];
        da[s] = nn::dot(dop, v, dh);
        sum += a[s] * da[s];
      }
      const double* q = qkv.data() + p * 3 * W + h * dh;
      double* dq = d_qkv.data() + p * 3 * W + h * dh;
      for (std::size_t s = 0; s <= p; ++s) {
        const double ds = scale * a[s] * (da[s] - sum);
        const double* k = qkv.data() + s * 3 * W + W + h * dh;
        double* dk = d_qkv.data() + s * 3 * W + W + h * dh;
        for (std::size_t d = 0; d < dh; ++d) {
          dq[d] += ds * k[d];
          dk[d] += ds * q[d];
        }
      }
    }
  }
}

}  // namespace

std::vector<double> backbone_forward(const BackboneWeights& w, const TokenSequence& seq, BackboneTape* tape) {
  const auto& cfg = w.cfg;
  if (seq.frames < 1) throw InputError("backbone needs at least one frame");
  if (seq.frames > cfg.max_frames)
    throw InputError("sequence has " + std::to_string(seq.frames) + " frames, maximum is " +
                     std::to_string(cfg.max_frames));
  const auto N = static_cast<std::size_t>(seq.frames);
  const auto D = static_cast<std::size_t>(cfg.feature_dim);
  const auto A = static_cast<std::size_t>(cfg.action_dim);
  if (seq.features.size() != N * D || seq.actions.size() != N * A)
    throw InputError("token sequence shape does not match backbone");
  const auto W = static_cast<std::size_t>(cfg.width);
  const auto F = W * static_cast<std::size_t>(cfg.ffn_mult);
  const std::size_t rows = 2 * N;

  std::vector<double> x(rows * W);
  {
    std::vector<double> fe(N * W), ae(N * W);
    w.feat_in.forward(seq.features, N, fe);
    w.act_in.forward(seq.actions, N, ae);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        x[(2 * i) * W + j] = fe[i * W + j] + w.pos.value[(2 * i) * W + j];
        x[(2 * i + 1) * W + j] = ae[i * W + j] + w.pos.value[(2 * i + 1) * W + j];
      }
  }
  if (tape) {
    tape->frames = seq.frames;
    tape->blocks.assign(w.blocks.size(), {});
  }

  std::vector<double> h(rows * W), stats(2 * rows), qkv(rows * 3 * W), probs, attn, tmp(rows * W);
  std::vector<double> pre(rows * F), act(rows * F);
  for (std::size_t l = 0; l < w.blocks.size(); ++l) {
    const auto& b = w.blocks[l];
    if (tape) tape->blocks[l].x_in = x;
    b.ln1.forward(x, rows, h, stats);
    b.qkv.forward(h, rows, qkv);
    attention_forward(qkv, rows, W, static_cast<std::size_t>(cfg.heads), probs, attn);
    b.proj.forward(attn, rows, tmp);
    if (tape) {
      auto& t = tape->blocks[l];
      t.ln1_out = h;
      t.ln1_stats = stats;
      t.qkv = qkv;
      t.probs = probs;
      t.attn = attn;
    }
    for (std::size_t i = 0; i < rows * W; ++i) x[i] += tmp[i];
    if (tape) tape->blocks[l].x_mid = x;
    b.ln2.forward(x, rows, h, stats);
    b.ff1.forward(h, rows, pre);
    for (std::size_t i = 0; i < rows * F; ++i) act[i] = nn::gelu(pre[i]);
    b.ff2.forward(act, rows, tmp);
    if (tape) {
      auto& t = tape->blocks[l];
      t.ln2_out = h;
      t.ln2_stats = stats;
      t.ff_pre = pre;
      t.ff_act = act;
    }
    for (std::size_t i = 0; i < rows * W; ++i) x[i] += tmp[i];
  }
  std::vector<double> out(rows * W);
  w.ln_f.forward(x, rows, out, stats);
  if (tape) {
    tape->x_final = x;
    tape->lnf_stats = stats;
  }
  return out;
}

std::vector<FutureRepresentation> split_outputs(std::span<const double> out, int frames, int width) {
  const auto W = static_cast<std::size_t>(width);
  std::vector<FutureRepresentation> reps(static_cast<std::size_t>(frames));
  for (std::size_t i = 0; i < reps.size(); ++i) {
    reps[i].f_prime.assign(out.begin() + static_cast<std::ptrdiff_t>(2 * i * W),
                           out.begin() + static_cast<std::ptrdiff_t>((2 * i + 1) * W));
    reps[i].da_prime.assign(out.begin() + static_cast<std::ptrdiff_t>((2 * i + 1) * W),
                            out.begin() + static_cast<std::ptrdiff_t>((2 * i + 2) * W));
  }
  return reps;
}

std::vector<double> frame_pair(std::span<const double> out, int frame, int width) {
  const auto W = static_cast<std::size_t>(width);
  const auto i = static_cast<std::size_t>(frame);
  return {out.begin() + static_cast<std::ptrdiff_t>(2 * i * W),
          out.begin() + static_cast<std::ptrdiff_t>((2 * i + 2) * W)};
}

BackboneInputGrads backbone_backward(const BackboneWeights& w, const TokenSequence& seq, const BackboneTape& tape,
                                     std::span<const double> d_out, BackboneWeights& grad) {
  const auto& cfg = w.cfg;
  const auto N = static_cast<std::size_t>(tape.frames);
  const auto W = static_cast<std::size_t>(cfg.width);
  const auto F = W * static_cast<std::size_t>(cfg.ffn_mult);
  const std::size_t rows = 2 * N;
  if (d_out.size() != rows * W) throw InputError("backbone output gradient has the wrong shape");

  std::vector<double> dx(rows * W, 0.0);
  w.ln_f.backward(tape.x_final, tape.lnf_stats, d_out, rows, dx, grad.ln_f);

  std::vector<double> dh(rows * W), dact(rows * F), dattn(rows * W), dqkv;
  for (std::size_t l = w.blocks.size(); l-- > 0;) {
    const auto& b = w.blocks[l];
    auto& g = grad.blocks[l];
    const auto& t = tape.blocks[l];
    // x_out = x_mid + ff2(gelu(ff1(ln2(x_mid))))
    std::fill(dact.begin(), dact.end(), 0.0);
    b.ff2.backward(t.ff_act, dx, rows, dact, g.ff2);
    for (std::size_t i = 0; i < rows * F; ++i) dact[i] *= nn::gelu_grad(t.ff_pre[i]);
    std::fill(dh.begin(), dh.end(), 0.0);
    b.ff1.backward(t.ln2_out, dact, rows, dh, g.ff1);
    b.ln2.backward(t.x_mid, t.ln2_stats, dh, rows, dx, g.ln2);
    // x_mid = x_in + proj(attn(qkv(ln1(x_in))))
    std::fill(dattn.begin(), dattn.end(), 0.0);
    b.proj.backward(t.attn, dx, rows, dattn, g.proj);
    attention_backward(t.qkv, t.probs, dattn, rows, W, static_cast<std::size_t>(cfg.heads), dqkv);
    std::fill(dh.begin(), dh.end(), 0.0);
    b.qkv.backward(t.ln1_out, dqkv, rows, dh, g.qkv);
    b.ln1.backward(t.x_in, t.ln1_stats, dh, rows, dx, g.ln1);
  }

  std::vector<double> dfe(N * W), dae(N * W);
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < W; ++j) {
      dfe[i * W + j] = dx[(2 * i) * W + j];
      dae[i * W + j] = dx[(2 * i + 1) * W + j];
    }
  for (std::size_t i = 0; i < rows * W; ++i) grad.pos.value[i] += dx[i];
  BackboneInputGrads in;
  in.features.assign(N * static_cast<std::size_t>(cfg.feature_dim), 0.0);
  in.actions.assign(N * static_cast<std::size_t>(cfg.action_dim), 0.0);
  w.feat_in.backward(seq.features, dfe, N, in.features, grad.feat_in);
  w.act_in.backward(seq.actions, dae, N, in.actions, grad.act_in);
  return in;
}

}  // namespace wmdrive
