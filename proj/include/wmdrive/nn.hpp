#pragma once

// Minimal dense-layer toolkit with hand-written backward passes.
//
// Matrices are row-major std::vector<double>. Linear weights are stored
// (in x out) so that the forward pass is a sequence of row AXPYs; every output
// element accumulates its inputs in a fixed order independent of the number of
// rows, which keeps per-position results bitwise stable across batch shapes.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "wmdrive/rng.hpp"

namespace wmdrive::nn {

struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;

  std::size_t size() const { return value.size(); }
};

Param make_param(std::string name, std::vector<std::size_t> shape);

// y[r, :] = b + x[r, :] * W      (W is in x out)
void matmul_rows(std::span<const double> x, std::span<const double> w, std::span<const double> bias,
                 std::span<double> y, std::size_t rows, std::size_t in, std::size_t out);

double dot(const double* a, const double* b, std::size_t n);

struct Linear {
  Param w;
  Param b;  // empty when the layer has no bias
  std::size_t in{0};
  std::size_t out{0};

  void init(const std::string& name, std::size_t fan_in, std::size_t fan_out, bool bias, Rng& rng,
            double gain = 1.0);
  void forward(std::span<const double> x, std::size_t rows, std::span<double> y) const;
  /// Accumulates weight gradients into `grad` and, if dx is non-empty, adds the input gradient to it.
  void backward(std::span<const double> x, std::span<const double> dy, std::size_t rows, std::span<double> dx,
                Linear& grad) const;

  template <class F>
  void for_each_param(F&& f) {
    f(w);
    if (!b.value.empty()) f(b);
  }
  template <class F>
  void for_each_param(F&& f) const {
    f(w);
    if (!b.value.empty()) f(b);
  }
};

struct LayerNorm {
  Param gain;
  Param bias;
  std::size_t dim{0};

  void init(const std::string& name, std::size_t d);
  /// Writes normalized rows to y and the per-row mean / reciprocal std to stats (2 per row).
  void forward(std::span<const double> x, std::size_t rows, std::span<double> y, std::span<double> stats) const;
  void backward(std::span<const double> x, std::span<const double> stats, std::span<const double> dy,
                std::size_t rows, std::span<double> dx, LayerNorm& grad) const;

  template <class F>
  void for_each_param(F&& f) {
    f(gain);
    f(bias);
  }
  template <class F>
  void for_each_param(F&& f) const {
    f(gain);
    f(bias);
  }
};

// Elementwise activations. The *_grad variants take the pre-activation.
double gelu(double x);
double gelu_grad(double x);
double silu(double x);
double silu_grad(double x);
double sigmoid(double x);

/// Feedforward stack with SiLU between layers (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  struct Tape {
    std::size_t rows{0};
    std::vector<std::vector<double>> inputs;  // input to each layer
    std::vector<std::vector<double>> pre;     // pre-activation of each hidden layer
  };

  void init(const std::string& name, const std::vector<std::size_t>& dims, Rng& rng, double last_gain = 1.0);
  /// x holds `rows` inputs back to back.
  std::vector<double> forward(std::span<const double> x, std::size_t rows, Tape* tape = nullptr) const;
  std::vector<double> forward(std::span<const double> x, Tape* tape = nullptr) const { return forward(x, 1, tape); }
  /// Returns dL/dx; accumulates parameter gradients into grad.
  std::vector<double> backward(const Tape& tape, std::span<const double> dy, Mlp& grad) const;

  std::size_t in_dim() const { return layers.front().in; }
  std::size_t out_dim() const { return layers.back().out; }

  template <class F>
  void for_each_param(F&& f) {
    for (auto& l : layers) l.for_each_param(f);
  }
  template <class F>
  void for_each_param(F&& f) const {
    for (const auto& l : layers) l.for_each_param(f);
  }
};

/// Sinusoidal embedding of a scalar time in [0, 1].
std::vector<double> time_embedding(double t, std::size_t dim);

// Generic helpers over any struct exposing for_each_param.

template <class T>
std::vector<Param*> param_list(T& m) {
  std::vector<Param*> out;
  m.for_each_param([&](Param& p) { out.push_back(&p); });
  return out;
}

template <class T>
std::vector<const Param*> param_list(const T& m) {
  std::vector<const Param*> out;
  m.for_each_param([&](const Param& p) { out.push_back(&p); });
  return out;
}

template <class T>
T zeros_like(const T& m) {
  T z = m;
  z.for_each_param([](Param& p) { std::fill(p.value.begin(), p.value.end(), 0.0); });
  return z;
}

template <class T>
void set_zero(T& m) {
  m.for_each_param([](Param& p) { std::fill(p.value.begin(), p.value.end(), 0.0); });
}

/// dst += scale * src, parameter by parameter.
template <class T>
void accumulate(T& dst, const T& src, double scale = 1.0) {
  auto d = param_list(dst);
  auto s = param_list(src);
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t k = 0; k < d[i]->value.size(); ++k) d[i]->value[k] += scale * s[i]->value[k];
}

template <class T>
std::size_t param_count(const T& m) {
  std::size_t n = 0;
  m.for_each_param([&](const Param& p) { n += p.size(); });
  return n;
}

/// FNV-1a over the raw bytes of every parameter, in declaration order.
std::uint64_t checksum(std::span<const Param* const> params);

template <class T>
std::uint64_t checksum(const T& m) {
  auto p = param_list(m);
  return checksum(std::span<const Param* const>(p.data(), p.size()));
}

/// Rounds values to the nearest float so that 32-bit checkpoints are lossless.
void round_to_float(std::span<double> v);

template <class T>
void round_params_to_float(T& m) {
  m.for_each_param([](Param& p) { round_to_float(p.value); });
}

/// Adam with first/second moment estimates; moments are kept float-representable.
class Adam {
 public:
  struct Hyper {
    double lr{3e-4};
    double beta1{0.9};
    double beta2{0.999};
    double eps{1e-8};
  };

  Adam() = default;
  Adam(std::vector<Param*> params, Hyper h);

  void step(const std::vector<const Param*>& grads);

  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  std::vector<Param>& first_moments() { return m_; }
  std::vector<Param>& second_moments() { return v_; }
  const std::vector<Param>& first_moments() const { return m_; }
  const std::vector<Param>& second_moments() const { return v_; }
  Hyper& hyper() { return h_; }

 private:
  std::vector<Param*> params_;
  std::vector<Param> m_;
  std::vector<Param> v_;
  Hyper h_;
  std::int64_t t_{0};
};

}  // namespace wmdrive::nn
