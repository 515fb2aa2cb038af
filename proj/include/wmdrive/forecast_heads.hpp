#pragma once

#include <span>
#include <vector>

#include "wmdrive/nn.hpp"
#include "wmdrive/planner.hpp"
#include "wmdrive/world_sim.hpp"

namespace wmdrive {

struct HeadsConfig {
  int cond_dim{512};
  int action_dim{6};
  int feature_dim{128};
  int num_rays{64};
  int embed_dim{16};
  int hidden{256};
  int time_dim{32};
  double c_max{100.0};
  double lambda_c{0.1};

  void validate() const;
};

/// v_img(cond, dA_next, t, F_t) -> R^D.
struct ImgHead {
  nn::Mlp net;
  template <class F>
  void for_each_param(F&& f) {
    net.for_each_param(f);
  }
  template <class F>
  void for_each_param(F&& f) const {
    net.for_each_param(f);
  }
};

/// f_d(cond, dA_next) -> (range, confidence logit) per ray.
struct DepthHead {
  nn::Mlp net;
  double c_max{100.0};
  template <class F>
  void for_each_param(F&& f) {
    net.for_each_param(f);
  }
  template <class F>
  void for_each_param(F&& f) const {
    net.for_each_param(f);
  }
};

/// f_sam(cond, dA_next, h_text) -> K x E.
struct SemanticHead {
  nn::Mlp net;
  int num_rays{64};
  int embed_dim{16};
  template <class F>
  void for_each_param(F&& f) {
    net.for_each_param(f);
  }
  template <class F>
  void for_each_param(F&& f) const {
    net.for_each_param(f);
  }
};

struct ForecastHeads {
  HeadsConfig cfg;
  ImgHead img;
  DepthHead depth;
  SemanticHead sem;

  template <class F>
  void for_each_param(F&& f) {
    img.for_each_param(f), depth.for_each_param(f), sem.for_each_param(f);
  }
  template <class F>
  void for_each_param(F&& f) const {
    img.for_each_param(f), depth.for_each_param(f), sem.for_each_param(f);
  }
};

ForecastHeads init_heads(const HeadsConfig& cfg, Rng& rng);

// Every head runs on a batch of rows: cond is rows x cond_dim, dA_next is
// rows x action_dim and so on. Losses average over all rows.

/// Flow loss on the next encoder feature: ||v_img - (eps - F_next)||^2, coordinate mean.
CondLoss img_flow_loss(const ImgHead& w, std::span<const double> cond, std::span<const double> da_next,
                       std::span<const double> f_next, std::span<const double> t, std::span<const double> eps,
                       ImgHead& grad);
CondLoss img_flow_loss(const ImgHead& w, std::span<const double> cond, std::span<const double> da_next,
                       std::span<const double> f_next, double t, std::span<const double> eps, ImgHead& grad);

struct DepthPrediction {
  int rows{1};
  std::vector<double> d_hat;  // rows x K canonical ranges
  std::vector<double> c_hat;  // rows x K confidences in (0, c_max]
};

struct DepthTape {
  nn::Mlp::Tape mlp;
};

DepthPrediction depth_head(const DepthHead& w, std::span<const double> cond, std::span<const double> da_next,
                           DepthTape* tape = nullptr);

struct DepthLoss {
  double loss{0.0};
  std::vector<double> d_d;  // dL / d d_hat
  std::vector<double> d_c;  // dL / d c_hat
};

/// Per row: mean(c |e| - lambda_c log c) + mean |diff(d_hat) - diff(d)| along the ray axis.
DepthLoss depth_loss(const DepthPrediction& pred, std::span<const double> target, double lambda_c);

/// Returns dL/dcond given gradients w.r.t. the prediction.
std::vector<double> depth_head_backward(const DepthHead& w, const DepthTape& tape, const DepthPrediction& pred,
                                        const DepthLoss& dl, int cond_dim, DepthHead& grad);

double canonical_scale(double d_raw, double max_range);
double metric_range(double canonical, double max_range);
std::vector<double> canonical_scan(const Observation& obs, double max_range);

/// Queried classes for the semantic head.
enum class QueryClass : int { kVehicle = 0, kPedestrian = 1 };
inline constexpr int kNumQueryClasses = 2;

/// Fixed unit-norm text stand-ins, one per queried class.
struct ClassEmbeddingTable {
  int dim{16};
  std::vector<std::vector<double>> rows;  // kNumQueryClasses x dim

  const std::vector<double>& at(QueryClass c) const;
};

ClassEmbeddingTable make_class_table(std::uint64_t seed, int dim);

/// K x E: the class embedding on rays of the queried class, zero elsewhere.
std::vector<double> semantic_target(const Observation& obs, QueryClass c, const ClassEmbeddingTable& table);

/// h_text holds one class embedding per row; the output is rows x K x E.
std::vector<double> semantic_head(const SemanticHead& w, std::span<const double> cond,
                                  std::span<const double> da_next, std::span<const double> h_text,
                                  nn::Mlp::Tape* tape = nullptr);

LossGrad semantic_loss(std::span<const double> pred, std::span<const double> target);

std::vector<double> semantic_head_backward(const SemanticHead& w, const nn::Mlp::Tape& tape,
                                           std::span<const double> d_pred, int cond_dim, SemanticHead& grad);

}  // namespace wmdrive
