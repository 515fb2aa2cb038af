#include "wmdrive/encoder.hpp"

#include <cmath>

#include "wmdrive/errors.hpp"
#include "wmdrive/nn.hpp"
#include "wmdrive/rng.hpp"

namespace wmdrive {

EncoderWeights init_encoder(std::uint64_t seed, int num_rays, int num_classes, int dim, double max_range) {
  if (dim < 8) throw ConfigError("encoder dimension must be at least 8");
  if (num_rays < 1 || num_classes < 1) throw ConfigError("encoder needs at least one ray and one class");
  if (!(max_range > 0.0)) throw ConfigError("encoder max_range must be positive");
  EncoderWeights e;
  e.seed = seed;
  e.num_rays = num_rays;
  e.num_classes = num_classes;
  e.dim = dim;
  e.max_range = max_range;
  const std::size_t in = static_cast<std::size_t>(e.input_dim());
  const std::size_t out = static_cast<std::size_t>(dim);
  Rng rng = make_rng({stream::kEncoder, seed});
  e.w.resize(in * out);
  fill_normal(rng, e.w);
  for (std::size_t j = 0; j < out; ++j) {
    double n2 = 0.0;
    for (std::size_t k = 0; k < in; ++k) n2 += e.w[k * out + j] * e.w[k * out + j];
    const double inv = 1.0 / std::sqrt(n2);
    for (std::size_t k = 0; k < in; ++k) e.w[k * out + j] *= inv;
  }
  e.b.resize(out);
  fill_normal(rng, e.b);
  for (auto& v : e.b) v *= 0.1;
  return e;
}

std::vector<double> encoder_input(const Observation& obs, double max_range) {
  std::vector<double> u;
  u.reserve(obs.ranges.size() + obs.semantics.size());
  for (double r : obs.ranges) u.push_back(r / max_range);
  u.insert(u.end(), obs.semantics.begin(), obs.semantics.end());
  return u;
}

FeatureToken encode_input(const EncoderWeights& w, const std::vector<double>& input) {
  if (static_cast<int>(input.size()) != w.input_dim())
    throw ConfigError("encoder input has " + std::to_string(input.size()) + " values, expected " +
                      std::to_string(w.input_dim()));
  FeatureToken f;
  f.values.resize(static_cast<std::size_t>(w.dim));
  nn::matmul_rows(input, w.w, w.b, f.values, 1, input.size(), f.values.size());
  return f;
}

FeatureToken encode(const EncoderWeights& w, const Observation& obs) {
  if (obs.num_rays() != w.num_rays ||
      obs.semantics.size() != static_cast<std::size_t>(w.num_rays * w.num_classes))
    throw ConfigError("observation shape does not match encoder");
  return encode_input(w, encoder_input(obs, w.max_range));
}

std::uint64_t checksum(const EncoderWeights& w) {
  nn::Param pw{"enc.w", {}, w.w};
  nn::Param pb{"enc.b", {}, w.b};
  const nn::Param* ps[] = {&pw, &pb};
  return nn::checksum(std::span<const nn::Param* const>(ps, 2));
}

}  // namespace wmdrive
