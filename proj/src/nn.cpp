#include "wmdrive/nn.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

#include "wmdrive/errors.hpp"

namespace wmdrive::nn {

Param make_param(std::string name, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return Param{std::move(name), std::move(shape), std::vector<double>(n, 0.0)};
}

namespace {

// Explicit 8-lane vectors; unaligned access goes through memcpy.
typedef double v8 __attribute__((vector_size(64)));

inline v8 load8(const double* p) {
  v8 v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void store8(double* p, v8 v) { std::memcpy(p, &v, sizeof(v)); }

inline v8 splat(double a) { return v8{a, a, a, a, a, a, a, a}; }

// y[r, j] = bias[j] + sum_k x[r, k] w[k, j], k ascending, for R rows and the
// 16-column block starting at j.
template <int R>
inline void mm_block16(const double* x, std::size_t in, const double* w, std::size_t out, const double* bias,
                       double* y, std::size_t j) {
  v8 acc[R][2];
  const v8 b0 = bias ? load8(bias + j) : splat(0.0);
  const v8 b1 = bias ? load8(bias + j + 8) : splat(0.0);
  for (int r = 0; r < R; ++r) acc[r][0] = b0, acc[r][1] = b1;
  for (std::size_t k = 0; k < in; ++k) {
    const v8 w0 = load8(w + k * out + j);
    const v8 w1 = load8(w + k * out + j + 8);
    for (int r = 0; r < R; ++r) {
      const v8 a = splat(x[r * in + k]);
      acc[r][0] += a * w0;
      acc[r][1] += a * w1;
    }
  }
  for (int r = 0; r < R; ++r) {
    store8(y + r * out + j, acc[r][0]);
    store8(y + r * out + j + 8, acc[r][1]);
  }
}

template <int R>
inline void mm_rows(const double* x, std::size_t in, const double* w, std::size_t out, const double* bias,
                    double* y) {
  std::size_t j = 0;
  for (; j + 16 <= out; j += 16) mm_block16<R>(x, in, w, out, bias, y, j);
  for (; j < out; ++j)
    for (int r = 0; r < R; ++r) {
      double acc = bias ? bias[j] : 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += x[r * in + k] * w[k * out + j];
      y[r * out + j] = acc;
    }
}


// dW[k0 + q, j..j+15] += sum_r x[r, k0 + q] dy[r, j..j+15] for q < Q, r ascending.
template <int Q>
inline void dw_block(const double* x, std::size_t in, const double* dy, std::size_t out, std::size_t rows,
                     double* gw, std::size_t k0, std::size_t j) {
  v8 acc[Q][2];
  for (int q = 0; q < Q; ++q) {
    acc[q][0] = load8(gw + (k0 + q) * out + j);
    acc[q][1] = load8(gw + (k0 + q) * out + j + 8);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const v8 d0 = load8(dy + r * out + j);
    const v8 d1 = load8(dy + r * out + j + 8);
    for (int q = 0; q < Q; ++q) {
      const v8 a = splat(x[r * in + k0 + q]);
      acc[q][0] += a * d0;
      acc[q][1] += a * d1;
    }
  }
  for (int q = 0; q < Q; ++q) {
    store8(gw + (k0 + q) * out + j, acc[q][0]);
    store8(gw + (k0 + q) * out + j + 8, acc[q][1]);
  }
}

inline double lane_sum(v8 s) { return ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7])); }

// dx[r, k] += sum_j dy[r, j] w[k, j] for R rows and Q inputs. Each sum runs in
// 8 lanes over j, then a fixed lane tree, then the scalar tail.
template <int R, int Q>
inline void dx_block(const double* dy, std::size_t out, const double* w, double* dx, std::size_t in,
                     std::size_t k0) {
  v8 acc[R][Q];
  for (int r = 0; r < R; ++r)
    for (int q = 0; q < Q; ++q) acc[r][q] = splat(0.0);
  std::size_t j = 0;
  for (; j + 8 <= out; j += 8) {
    v8 wv[Q];
    for (int q = 0; q < Q; ++q) wv[q] = load8(w + (k0 + q) * out + j);
    for (int r = 0; r < R; ++r) {
      const v8 d = load8(dy + r * out + j);
      for (int q = 0; q < Q; ++q) acc[r][q] += d * wv[q];
    }
  }
  for (int r = 0; r < R; ++r)
    for (int q = 0; q < Q; ++q) {
      double t = lane_sum(acc[r][q]);
      for (std::size_t jj = j; jj < out; ++jj) t += dy[r * out + jj] * w[(k0 + q) * out + jj];
      dx[r * in + k0 + q] += t;
    }
}

template <int R>
inline void dx_rows(const double* dy, std::size_t out, const double* w, double* dx, std::size_t in) {
  std::size_t k = 0;
  for (; k + 4 <= in; k += 4) dx_block<R, 4>(dy, out, w, dx, in, k);
  for (; k < in; ++k) dx_block<R, 1>(dy, out, w, dx, in, k);
}

}  // namespace

void matmul_rows(std::span<const double> x, std::span<const double> w, std::span<const double> bias,
                 std::span<double> y, std::size_t rows, std::size_t in, std::size_t out) {
  const double* b = bias.empty() ? nullptr : bias.data();
  std::size_t r = 0;
  for (; r + 8 <= rows; r += 8) mm_rows<8>(x.data() + r * in, in, w.data(), out, b, y.data() + r * out);
  for (; r + 4 <= rows; r += 4) mm_rows<4>(x.data() + r * in, in, w.data(), out, b, y.data() + r * out);
  for (; r < rows; ++r) mm_rows<1>(x.data() + r * in, in, w.data(), out, b, y.data() + r * out);
}

// 32 partial sums reduced in a fixed tree, then the scalar tail.
double dot(const double* a, const double* b, std::size_t n) {
  v8 acc0 = splat(0.0), acc1 = acc0, acc2 = acc0, acc3 = acc0;
  std::size_t i = 0;
  for (; i + 32 <= n; i += 32) {
    acc0 += load8(a + i) * load8(b + i);
    acc1 += load8(a + i + 8) * load8(b + i + 8);
    acc2 += load8(a + i + 16) * load8(b + i + 16);
    acc3 += load8(a + i + 24) * load8(b + i + 24);
  }
  for (; i + 8 <= n; i += 8) acc0 += load8(a + i) * load8(b + i);
  const v8 s = (acc0 + acc1) + (acc2 + acc3);
  double total = ((s[0] + s[1]) + (s[2] + s[3])) + ((s[4] + s[5]) + (s[6] + s[7]));
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

void Linear::init(const std::string& name, std::size_t fan_in, std::size_t fan_out, bool bias, Rng& rng,
                  double gain) {
  in = fan_in;
  out = fan_out;
  w = make_param(name + ".w", {fan_in, fan_out});
  const double std = gain * std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
  std::normal_distribution<double> n(0.0, std);
  for (auto& v : w.value) v = n(rng);
  b = bias ? make_param(name + ".b", {fan_out}) : Param{};
}

void Linear::forward(std::span<const double> x, std::size_t rows, std::span<double> y) const {
  matmul_rows(x, w.value, b.value, y, rows, in, out);
}

void Linear::backward(std::span<const double> x, std::span<const double> dy, std::size_t rows,
                      std::span<double> dx, Linear& grad) const {
  double* gw = grad.w.value.data();
  {
    const std::size_t jv = out / 16 * 16;
    std::size_t k = 0;
    for (; k + 8 <= in; k += 8)
      for (std::size_t j = 0; j < jv; j += 16) dw_block<8>(x.data(), in, dy.data(), out, rows, gw, k, j);
    for (; k < in; ++k)
      for (std::size_t j = 0; j < jv; j += 16) dw_block<1>(x.data(), in, dy.data(), out, rows, gw, k, j);
    for (std::size_t j = jv; j < out; ++j)
      for (std::size_t k = 0; k < in; ++k)
        for (std::size_t r = 0; r < rows; ++r) gw[k * out + j] += x[r * in + k] * dy[r * out + j];
  }
  if (!b.value.empty()) {
    double* gb = grad.b.value.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < out; ++j) gb[j] += dy[r * out + j];
  }
  if (!dx.empty()) {
    const double* wp = w.value.data();
    std::size_t r = 0;
    for (; r + 4 <= rows; r += 4) dx_rows<4>(dy.data() + r * out, out, wp, dx.data() + r * in, in);
    for (; r < rows; ++r) dx_rows<1>(dy.data() + r * out, out, wp, dx.data() + r * in, in);
  }
}

void LayerNorm::init(const std::string& name, std::size_t d) {
  dim = d;
  gain = make_param(name + ".gain", {d});
  bias = make_param(name + ".bias", {d});
  std::fill(gain.value.begin(), gain.value.end(), 1.0);
}

namespace {
constexpr double kLnEps = 1e-5;
}

void LayerNorm::forward(std::span<const double> x, std::size_t rows, std::span<double> y,
                        std::span<double> stats) const {
  const double inv_d = 1.0 / static_cast<double>(dim);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * dim;
    double mean = 0.0;
    for (std::size_t j = 0; j < dim; ++j) mean += xr[j];
    mean *= inv_d;
    double var = 0.0;
    for (std::size_t j = 0; j < dim; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var *= inv_d;
    const double rstd = 1.0 / std::sqrt(var + kLnEps);
    stats[2 * r] = mean;
    stats[2 * r + 1] = rstd;
    double* yr = y.data() + r * dim;
    for (std::size_t j = 0; j < dim; ++j) yr[j] = (xr[j] - mean) * rstd * gain.value[j] + bias.value[j];
  }
}

void LayerNorm::backward(std::span<const double> x, std::span<const double> stats, std::span<const double> dy,
                         std::size_t rows, std::span<double> dx, LayerNorm& grad) const {
  const double inv_d = 1.0 / static_cast<double>(dim);
  std::vector<double> xhat(dim), dxhat(dim);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * dim;
    const double* dyr = dy.data() + r * dim;
    const double mean = stats[2 * r];
    const double rstd = stats[2 * r + 1];
    double sum_dxhat = 0.0;
    double sum_dxhat_xhat = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      xhat[j] = (xr[j] - mean) * rstd;
      grad.gain.value[j] += dyr[j] * xhat[j];
      grad.bias.value[j] += dyr[j];
      dxhat[j] = dyr[j] * gain.value[j];
      sum_dxhat += dxhat[j];
      sum_dxhat_xhat += dxhat[j] * xhat[j];
    }
    double* dxr = dx.data() + r * dim;
    for (std::size_t j = 0; j < dim; ++j)
      dxr[j] += rstd * (dxhat[j] - inv_d * sum_dxhat - xhat[j] * inv_d * sum_dxhat_xhat);
  }
}

double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

double gelu_grad(double x) {
  constexpr double c = 0.7978845608028654;
  const double u = c * (x + 0.044715 * x * x * x);
  const double th = std::tanh(u);
  const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) { return x * sigmoid(x); }

double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

void Mlp::init(const std::string& name, const std::vector<std::size_t>& dims, Rng& rng, double last_gain) {
  if (dims.size() < 2) throw ConfigError("Mlp needs at least input and output sizes");
  layers.clear();
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Linear l;
    const bool last = i + 2 == dims.size();
    l.init(name + ".l" + std::to_string(i), dims[i], dims[i + 1], true, rng, last ? last_gain : 1.0);
    layers.push_back(std::move(l));
  }
}

std::vector<double> Mlp::forward(std::span<const double> x, std::size_t rows, Tape* tape) const {
  if (x.size() != rows * in_dim()) throw InputError("Mlp input size mismatch");
  std::vector<double> cur(x.begin(), x.end());
  if (tape) {
    tape->rows = rows;
    tape->inputs.clear();
    tape->pre.clear();
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    std::vector<double> y(rows * layers[i].out);
    layers[i].forward(cur, rows, y);
    if (tape) tape->inputs.push_back(cur);
    if (i + 1 < layers.size()) {
      if (tape) tape->pre.push_back(y);
      for (auto& v : y) v = silu(v);
    }
    cur = std::move(y);
  }
  return cur;
}

std::vector<double> Mlp::backward(const Tape& tape, std::span<const double> dy, Mlp& grad) const {
  const std::size_t rows = tape.rows;
  if (dy.size() != rows * out_dim()) throw InputError("Mlp output gradient size mismatch");
  std::vector<double> g(dy.begin(), dy.end());
  for (std::size_t ii = layers.size(); ii-- > 0;) {
    if (ii + 1 < layers.size()) {
      const auto& pre = tape.pre[ii];
      for (std::size_t j = 0; j < g.size(); ++j) g[j] *= silu_grad(pre[j]);
    }
    std::vector<double> dx(rows * layers[ii].in, 0.0);
    layers[ii].backward(tape.inputs[ii], g, rows, dx, grad.layers[ii]);
    g = std::move(dx);
  }
  return g;
}

std::vector<double> time_embedding(double t, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<double> out(dim, 0.0);
  for (std::size_t j = 0; j < half; ++j) {
    const double freq =
        half > 1 ? std::exp(std::log(200.0) * static_cast<double>(j) / static_cast<double>(half - 1)) : 1.0;
    out[j] = std::sin(freq * t);
    out[half + j] = std::cos(freq * t);
  }
  return out;
}

std::uint64_t checksum(std::span<const Param* const> params) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Param* p : params) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p->value.data());
    const std::size_t n = p->value.size() * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

void round_to_float(std::span<double> v) {
  for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
}

Adam::Adam(std::vector<Param*> params, Hyper h) : params_(std::move(params)), h_(h) {
  for (const Param* p : params_) {
    m_.push_back(Param{p->name, p->shape, std::vector<double>(p->size(), 0.0)});
    v_.push_back(Param{p->name, p->shape, std::vector<double>(p->size(), 0.0)});
  }
}

void Adam::step(const std::vector<const Param*>& grads) {
  if (grads.size() != params_.size()) throw InputError("Adam: gradient list does not match parameters");
  ++t_;
  const double bc1 = 1.0 - std::pow(h_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(h_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i]->value;
    const auto& g = grads[i]->value;
    auto& m = m_[i].value;
    auto& v = v_[i].value;
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = static_cast<float>(h_.beta1 * m[k] + (1.0 - h_.beta1) * g[k]);
      v[k] = static_cast<float>(h_.beta2 * v[k] + (1.0 - h_.beta2) * g[k] * g[k]);
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] = static_cast<float>(p[k] - h_.lr * mhat / (std::sqrt(vhat) + h_.eps));
    }
  }
}

}  // namespace wmdrive::nn
