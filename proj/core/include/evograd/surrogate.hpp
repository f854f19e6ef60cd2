#pragma once

#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evograd/numerics.hpp"

namespace evograd {

/// Which Taylor residual the surrogate is trained on.
///   egl      r = y_i - y_j + g(x_i)^T tau                      (uniform weights)
///   evograd  same residual, per-pair importance weights
///   hgrad    r = ... + 1/2 tau^T J_g(x_i) tau                  (uniform weights)
///   evograd2 second-order residual with importance weights
/// where tau = x_j - x_i.
enum class LossVariant { egl, evograd, hgrad, evograd2 };

std::string_view to_string(LossVariant v);
LossVariant loss_variant_from_string(std::string_view name);
bool has_hessian_term(LossVariant v);
bool uses_pair_weights(LossVariant v);

enum class TrainAlgorithm { adam, sgd };

struct LossConfig {
  LossVariant variant = LossVariant::evograd2;
  /// Differentiate through the Jacobian term. Only meaningful for variants
  /// with a Hessian term; detached treats J as a constant.
  bool jacobian_attached = false;
  int batch_size = 64;
  double learn_rate = 1e-3;
  TrainAlgorithm algorithm = TrainAlgorithm::adam;
};

/// (anchor, probe) sample pair in normalized coordinates.
struct TaylorPair {
  Vec anchor;
  Vec probe;
  double y_anchor = 0.0;
  double y_probe = 0.0;
  double weight = 1.0;
};

/// Feed-forward network g: R^n -> R^n with tanh hidden layers and a linear
/// output layer. Parameters live in one flat vector (per layer: W column
/// major, then b).
class GradNet {
 public:
  /// layer_sizes = {n, h_1, ..., h_k, n}; weights drawn U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  GradNet(std::vector<int> layer_sizes, Rng& rng);
  /// Zero-initialized network; parameters set by the caller.
  explicit GradNet(std::vector<int> layer_sizes);

  static std::vector<int> default_layers(int dim);

  int dim() const { return sizes_.front(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  const std::vector<int>& layer_sizes() const { return sizes_; }

  Eigen::Map<const Mat> weight(int layer) const;
  Eigen::Map<Mat> weight(int layer);
  Eigen::Map<const Vec> bias(int layer) const;
  Eigen::Map<Vec> bias(int layer);

  const Vec& params() const { return params_; }
  Vec& params() { return params_; }

  Vec forward(const Vec& x) const;
  /// Column-wise forward pass over a batch (one sample per column).
  Mat forward_batch(const Mat& xs) const;
  /// J[k][l] = d g_k / d x_l by forward-mode accumulation along the n unit
  /// directions.
  Mat jacobian(const Vec& x) const;
  /// Directional derivative J(x) v (one forward-mode pass).
  Vec jvp(const Vec& x, const Vec& v) const;

  nlohmann::json checkpoint() const;
  static GradNet from_checkpoint(const nlohmann::json& j);

 private:
  void layout();

  std::vector<int> sizes_;
  std::vector<Eigen::Index> w_offset_;
  std::vector<Eigen::Index> b_offset_;
  Vec params_;
};

/// Residual of a single pair under cfg.variant.
double residual(const LossConfig& cfg, const GradNet& net, const TaylorPair& pair);

/// Effective per-pair weights of a batch: pair.weight for weighted variants,
/// 1/|batch| otherwise.
std::vector<double> effective_weights(const LossConfig& cfg, std::span<const TaylorPair> batch);

/// sum_b w_b r_b^2 over the batch.
double batch_loss(const LossConfig& cfg, const GradNet& net, std::span<const TaylorPair> batch);

/// Batch loss where the Jacobian term is taken from `jacobian_net` instead of
/// `net`. The detached parameter gradient is the derivative of this with
/// respect to net's parameters at jacobian_net == net.
double batch_loss_frozen_jacobian(const LossConfig& cfg, const GradNet& net, const GradNet& jacobian_net,
                                  std::span<const TaylorPair> batch);

/// Loss and its gradient with respect to the flat parameter vector. With
/// cfg.jacobian_attached the second-order term is differentiated through the
/// network (forward-over-reverse); otherwise it only enters the residual value.
double batch_loss_gradient(const LossConfig& cfg, const GradNet& net, std::span<const TaylorPair> batch, Vec& grad);

struct EpochResult {
  /// Mean weighted squared residual after the epoch (NaN if diverged).
  double loss = 0.0;
  /// A non-finite loss or gradient was hit: parameters were restored to their
  /// pre-epoch values and the learning rate halved.
  bool diverged = false;
  int steps = 0;
};

/// Mini-batch trainer holding optimizer state (Adam moments) across epochs.
class SurrogateTrainer {
 public:
  explicit SurrogateTrainer(LossConfig cfg);

  /// One pass over `pairs` in order, in consecutive chunks of batch_size.
  /// With measure_loss the returned loss is re-evaluated after the last
  /// step; otherwise it is the mean of the per-batch losses seen during the
  /// epoch.
  EpochResult train_epoch(GradNet& net, std::span<const TaylorPair> pairs, bool measure_loss = true);

  /// Forget optimizer moments (e.g. after re-initializing the network).
  void reset();

  const LossConfig& config() const { return cfg_; }
  void set_learn_rate(double lr) { cfg_.learn_rate = lr; }

 private:
  void step(GradNet& net, const Vec& grad);

  LossConfig cfg_;
  Vec m_;
  Vec v_;
  long t_ = 0;
};

/// Mean of batch losses over consecutive chunks of cfg.batch_size.
double epoch_loss(const LossConfig& cfg, const GradNet& net, std::span<const TaylorPair> pairs);

}  // namespace evograd
