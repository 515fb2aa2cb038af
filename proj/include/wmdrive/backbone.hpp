#pragma once

#include <span>
#include <vector>

#include "wmdrive/nn.hpp"

namespace wmdrive {

struct BackboneConfig {
  int feature_dim{128};
  int action_dim{6};
  int width{256};
  int layers{4};
  int heads{4};
  int max_frames{8};
  int ffn_mult{4};

  void validate() const;
};

/// N frames; token order is F_1, dA_1, F_2, dA_2, ...
struct TokenSequence {
  int frames{0};
  std::vector<double> features;  // frames x feature_dim
  std::vector<double> actions;   // frames x action_dim
};

/// Backbone outputs for one frame: F' at token 2i, dA' at token 2i+1.
struct FutureRepresentation {
  std::vector<double> f_prime;
  std::vector<double> da_prime;

  /// [F', dA'], the conditioning vector every head consumes.
  std::vector<double> pair() const;
};

struct BackboneBlock {
  nn::LayerNorm ln1;
  nn::Linear qkv;
  nn::Linear proj;
  nn::LayerNorm ln2;
  nn::Linear ff1;
  nn::Linear ff2;

  template <class F>
  void for_each_param(F&& f) {
    ln1.for_each_param(f), qkv.for_each_param(f), proj.for_each_param(f);
    ln2.for_each_param(f), ff1.for_each_param(f), ff2.for_each_param(f);
  }
  template <class F>
  void for_each_param(F&& f) const {
    ln1.for_each_param(f), qkv.for_each_param(f), proj.for_each_param(f);
    ln2.for_each_param(f), ff1.for_each_param(f), ff2.for_each_param(f);
  }
};

struct BackboneWeights {
  BackboneConfig cfg;
  nn::Linear feat_in;
  nn::Linear act_in;
  nn::Param pos;  // (2 * max_frames) x width
  std::vector<BackboneBlock> blocks;
  nn::LayerNorm ln_f;

  template <class F>
  void for_each_param(F&& f) {
    feat_in.for_each_param(f), act_in.for_each_param(f), f(pos);
    for (auto& b : blocks) b.for_each_param(f);
    ln_f.for_each_param(f);
  }
  template <class F>
  void for_each_param(F&& f) const {
    feat_in.for_each_param(f), act_in.for_each_param(f), f(pos);
    for (const auto& b : blocks) b.for_each_param(f);
    ln_f.for_each_param(f);
  }
};

BackboneWeights init_backbone(const BackboneConfig& cfg, Rng& rng);

struct BackboneTape {
  struct Block {
    std::vector<double> x_in, ln1_out, ln1_stats, qkv, probs, attn, x_mid, ln2_out, ln2_stats, ff_pre, ff_act;
  };
  int frames{0};
  std::vector<Block> blocks;
  std::vector<double> x_final, lnf_stats;
};

/// Returns 2N x width output rows. Row p depends only on tokens 0..p.
std::vector<double> backbone_forward(const BackboneWeights& w, const TokenSequence& seq,
                                     BackboneTape* tape = nullptr);

std::vector<FutureRepresentation> split_outputs(std::span<const double> out, int frames, int width);

/// Conditioning vector of frame i taken straight from the output rows.
std::vector<double> frame_pair(std::span<const double> out, int frame, int width);

struct BackboneInputGrads {
  std::vector<double> features;
  std::vector<double> actions;
};

/// Accumulates weight gradients into grad and returns gradients w.r.t. the inputs.
BackboneInputGrads backbone_backward(const BackboneWeights& w, const TokenSequence& seq, const BackboneTape& tape,
                                     std::span<const double> d_out, BackboneWeights& grad);

}  // namespace wmdrive
