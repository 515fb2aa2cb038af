#pragma once

#include <cstdint>
#include <vector>

#include "wmdrive/world_sim.hpp"

namespace wmdrive {

struct FeatureToken {
  std::vector<double> values;
  friend bool operator==(const FeatureToken&, const FeatureToken&) = default;
};

/// Frozen affine map from a normalized scan to R^D. Never part of any
/// optimizer's parameter list.
struct EncoderWeights {
  std::uint64_t seed{0};
  int num_rays{0};
  int num_classes{0};
  int dim{0};
  double max_range{1.0};
  std::vector<double> w;  // input x dim, each output column has unit norm
  std::vector<double> b;  // dim

  int input_dim() const { return num_rays * (1 + num_classes); }
};

EncoderWeights init_encoder(std::uint64_t seed, int num_rays, int num_classes, int dim, double max_range);

/// Ranges divided by max_range, followed by the flattened one-hot semantics.
std::vector<double> encoder_input(const Observation& obs, double max_range);

FeatureToken encode(const EncoderWeights& w, const Observation& obs);
FeatureToken encode_input(const EncoderWeights& w, const std::vector<double>& input);

std::uint64_t checksum(const EncoderWeights& w);

}  // namespace wmdrive
