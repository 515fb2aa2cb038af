#include "wmdrive/forecast_heads.hpp"

#include <cmath>

#include "wmdrive/errors.hpp"

namespace wmdrive {

void HeadsConfig::validate() const {
  if (cond_dim < 1 || action_dim < 1 || feature_dim < 1 || num_rays < 1 || embed_dim < 1 || hidden < 1 ||
      time_dim < 2)
    throw ConfigError("head sizes must be positive");
  if (!(c_max > 1.0)) throw ConfigError("c_max must exceed 1");
  if (!(lambda_c > 0.0)) throw ConfigError("lambda_c must be positive");
}

ForecastHeads init_heads(const HeadsConfig& cfg, Rng& rng) {
  cfg.validate();
  ForecastHeads h;
  h.cfg = cfg;
  const auto C = static_cast<std::size_t>(cfg.cond_dim);
  const auto A = static_cast<std::size_t>(cfg.action_dim);
  const auto D = static_cast<std::size_t>(cfg.feature_dim);
  const auto K = static_cast<std::size_t>(cfg.num_rays);
  const auto E = static_cast<std::size_t>(cfg.embed_dim);
  const auto H = static_cast<std::size_t>(cfg.hidden);
  const auto T = static_cast<std::size_t>(cfg.time_dim);
  h.img.net.init("img", {C + A + T + D, H, H, D}, rng, 0.5);
  h.depth.net.init("depth", {C + A, H, 2 * K}, rng, 0.5);
  h.depth.c_max = cfg.c_max;
  h.sem.net.init("sem", {C + A + E, H, K * E}, rng, 0.5);
  h.sem.num_rays = cfg.num_rays;
  h.sem.embed_dim = cfg.embed_dim;
  nn::round_params_to_float(h);
  return h;
}

namespace {

struct Block {
  std::span<const double> data;
  std::size_t width;
};

// Row-wise concatenation of equally tall blocks.
std::vector<double> interleave(std::size_t rows, std::initializer_list<Block> blocks) {
  std::vector<double> out;
  for (std::size_t r = 0; r < rows; ++r)
    for (const auto& b : blocks)
      out.insert(out.end(), b.data.begin() + static_cast<std::ptrdiff_t>(r * b.width),
                 b.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * b.width));
  return out;
}

// Leading `width` columns of a rows x stride matrix.
std::vector<double> leading_columns(const std::vector<double>& m, std::size_t rows, std::size_t stride,
                                    std::size_t width) {
  std::vector<double> out(rows * width);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(m.begin() + static_cast<std::ptrdiff_t>(r * stride),
              m.begin() + static_cast<std::ptrdiff_t>(r * stride + width),
              out.begin() + static_cast<std::ptrdiff_t>(r * width));
  return out;
}

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

CondLoss img_flow_loss(const ImgHead& w, std::span<const double> cond, std::span<const double> da_next,
                       std::span<const double> f_next, std::span<const double> t, std::span<const double> eps,
                       ImgHead& grad) {
  if (!all_finite(cond) || !all_finite(f_next) || !all_finite(eps) || !all_finite(t))
    throw InputError("img_flow_loss: non-finite input");
  if (eps.size() != f_next.size()) throw InputError("img_flow_loss: noise and feature sizes differ");
  const std::size_t rows = t.size();
  if (rows == 0 || cond.size() % rows || da_next.size() % rows || f_next.size() % rows)
    throw InputError("img_flow_loss: inputs are not split evenly across rows");
  const std::size_t C = cond.size() / rows, A = da_next.size() / rows, D = f_next.size() / rows;
  const std::size_t T = w.net.in_dim() - C - A - D;
  std::vector<double> ft(f_next.size()), te;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto row = noisy(f_next.subspan(r * D, D), eps.subspan(r * D, D), t[r]);
    std::copy(row.begin(), row.end(), ft.begin() + static_cast<std::ptrdiff_t>(r * D));
    const auto e = nn::time_embedding(t[r], T);
    te.insert(te.end(), e.begin(), e.end());
  }
  const auto in = interleave(rows, {{cond, C}, {da_next, A}, {te, T}, {ft, D}});
  std::vector<double> target(f_next.size());
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = eps[i] - f_next[i];
  nn::Mlp::Tape tape;
  const auto v = w.net.forward(in, rows, &tape);
  const auto se = squared_error(v, target);
  const auto d_in = w.net.backward(tape, se.d_input, grad.net);
  return {se.loss, leading_columns(d_in, rows, w.net.in_dim(), C)};
}

CondLoss img_flow_loss(const ImgHead& w, std::span<const double> cond, std::span<const double> da_next,
                       std::span<const double> f_next, double t, std::span<const double> eps, ImgHead& grad) {
  const double ts[] = {t};
  return img_flow_loss(w, cond, da_next, f_next, ts, eps, grad);
}

namespace {

// Logit offset placing the initial confidence near 1.
double confidence_offset(double c_max) { return -std::log(c_max - 1.0); }

}  // namespace

DepthPrediction depth_head(const DepthHead& w, std::span<const double> cond, std::span<const double> da_next,
                           DepthTape* tape) {
  const std::size_t in = w.net.in_dim();
  const std::size_t rows = (cond.size() + da_next.size()) / in;
  if (rows == 0 || rows * in != cond.size() + da_next.size()) throw InputError("depth_head: input shape mismatch");
  const auto x = interleave(rows, {{cond, cond.size() / rows}, {da_next, da_next.size() / rows}});
  const auto out = w.net.forward(x, rows, tape ? &tape->mlp : nullptr);
  const std::size_t K = w.net.out_dim() / 2;
  DepthPrediction p;
  p.rows = static_cast<int>(rows);
  p.d_hat.resize(rows * K);
  p.c_hat.resize(rows * K);
  const double b0 = confidence_offset(w.c_max);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < K; ++k) {
      p.d_hat[r * K + k] = out[r * 2 * K + k];
      p.c_hat[r * K + k] = w.c_max * nn::sigmoid(out[r * 2 * K + K + k] + b0);
    }
  return p;
}

DepthLoss depth_loss(const DepthPrediction& pred, std::span<const double> target, double lambda_c) {
  if (!(lambda_c > 0.0)) throw ConfigError("lambda_c must be positive");
  const std::size_t rows = static_cast<std::size_t>(pred.rows);
  if (rows == 0 || pred.d_hat.size() != target.size() || pred.c_hat.size() != target.size() ||
      target.size() % rows != 0 || target.empty())
    throw InputError("depth_loss: shape mismatch");
  const std::size_t K = target.size() / rows;
  DepthLoss r;
  r.d_d.assign(target.size(), 0.0);
  r.d_c.assign(target.size(), 0.0);
  const double inv_k = 1.0 / static_cast<double>(K * rows);
  const double inv_g = K > 1 ? 1.0 / static_cast<double>((K - 1) * rows) : 0.0;
  for (std::size_t row = 0; row < rows; ++row) {
    const double* d = pred.d_hat.data() + row * K;
    const double* c = pred.c_hat.data() + row * K;
    const double* y = target.data() + row * K;
    double* gd = r.d_d.data() + row * K;
    double* gc = r.d_c.data() + row * K;
    for (std::size_t k = 0; k < K; ++k) {
      const double e = d[k] - y[k];
      r.loss += (c[k] * std::abs(e) - lambda_c * std::log(c[k])) * inv_k;
      gd[k] += c[k] * (e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0)) * inv_k;
      gc[k] = (std::abs(e) - lambda_c / c[k]) * inv_k;
    }
    for (std::size_t k = 0; k + 1 < K; ++k) {
      const double g = (d[k + 1] - d[k]) - (y[k + 1] - y[k]);
      r.loss += std::abs(g) * inv_g;
      const double sg = (g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0)) * inv_g;
      gd[k + 1] += sg;
      gd[k] -= sg;
    }
  }
  return r;
}

std::vector<double> depth_head_backward(const DepthHead& w, const DepthTape& tape, const DepthPrediction& pred,
                                        const DepthLoss& dl, int cond_dim, DepthHead& grad) {
  const auto rows = static_cast<std::size_t>(pred.rows);
  const std::size_t K = pred.d_hat.size() / rows;
  std::vector<double> d_out(2 * K * rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < K; ++k) {
      const double c = pred.c_hat[r * K + k];
      d_out[r * 2 * K + k] = dl.d_d[r * K + k];
      d_out[r * 2 * K + K + k] = dl.d_c[r * K + k] * c * (1.0 - c / w.c_max);
    }
  const auto d_in = w.net.backward(tape.mlp, d_out, grad.net);
  return leading_columns(d_in, rows, w.net.in_dim(), static_cast<std::size_t>(cond_dim));
}

double canonical_scale(double d_raw, double max_range) {
  if (!(d_raw > 0.0 && d_raw <= max_range)) throw InputError("range outside (0, max_range]");
  return d_raw / max_range;
}

double metric_range(double canonical, double max_range) { return canonical * max_range; }

std::vector<double> canonical_scan(const Observation& obs, double max_range) {
  std::vector<double> d(obs.ranges.size());
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = canonical_scale(obs.ranges[k], max_range);
  return d;
}

const std::vector<double>& ClassEmbeddingTable::at(QueryClass c) const {
  const int i = static_cast<int>(c);
  if (i < 0 || i >= static_cast<int>(rows.size())) throw InputError("unknown query class");
  return rows[static_cast<std::size_t>(i)];
}

ClassEmbeddingTable make_class_table(std::uint64_t seed, int dim) {
  if (dim < 2) throw ConfigError("class embedding dimension must be at least 2");
  ClassEmbeddingTable t;
  t.dim = dim;
  Rng rng = make_rng({stream::kClassTable, seed});
  for (int c = 0; c < kNumQueryClasses; ++c) {
    std::vector<double> v(static_cast<std::size_t>(dim));
    fill_normal(rng, v);
    double n2 = 0.0;
    for (double x : v) n2 += x * x;
    const double inv = 1.0 / std::sqrt(n2);
    for (auto& x : v) x *= inv;
    t.rows.push_back(std::move(v));
  }
  return t;
}

std::vector<double> semantic_target(const Observation& obs, QueryClass c, const ClassEmbeddingTable& table) {
  const auto& h = table.at(c);
  const SemanticClass want = c == QueryClass::kVehicle ? SemanticClass::kVehicle : SemanticClass::kPedestrian;
  const auto E = static_cast<std::size_t>(table.dim);
  std::vector<double> out(static_cast<std::size_t>(obs.num_rays()) * E, 0.0);
  for (int k = 0; k < obs.num_rays(); ++k)
    if (obs.class_of(k) == want) std::copy(h.begin(), h.end(), out.begin() + static_cast<std::ptrdiff_t>(k * E));
  return out;
}

std::vector<double> semantic_head(const SemanticHead& w, std::span<const double> cond,
                                  std::span<const double> da_next, std::span<const double> h_text,
                                  nn::Mlp::Tape* tape) {
  const auto E = static_cast<std::size_t>(w.embed_dim);
  const std::size_t rows = h_text.size() / E;
  if (rows == 0 || h_text.size() != rows * E || cond.size() % rows || da_next.size() % rows)
    throw InputError("semantic_head: class embedding size mismatch");
  const auto x = interleave(rows, {{cond, cond.size() / rows}, {da_next, da_next.size() / rows}, {h_text, E}});
  return w.net.forward(x, rows, tape);
}

LossGrad semantic_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size()) throw InputError("semantic_loss: shape mismatch");
  return squared_error(pred, target);
}

std::vector<double> semantic_head_backward(const SemanticHead& w, const nn::Mlp::Tape& tape,
                                           std::span<const double> d_pred, int cond_dim, SemanticHead& grad) {
  const auto d_in = w.net.backward(tape, d_pred, grad.net);
  return leading_columns(d_in, tape.rows, w.net.in_dim(), static_cast<std::size_t>(cond_dim));
}

}  // namespace wmdrive
