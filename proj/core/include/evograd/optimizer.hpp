#pragma once

#include <deque>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evograd/evo.hpp"
#include "evograd/objectives.hpp"
#include "evograd/run_record.hpp"
#include "evograd/surrogate.hpp"
#include "evograd/trust_region.hpp"

namespace evograd {

/// When the stall counter driving trust-region events advances.
///   strict_worsening  f(x_{k+1}) > f(x_k)
///   no_improvement    f(x_{k+1}) does not beat the best descent value since
///                     the last trust-region event
enum class StallRule { strict_worsening, no_improvement };

std::string_view to_string(StallRule r);
StallRule stall_rule_from_string(std::string_view name);

/// When the output normalizer is refit.
///   tr_event   on the first exploration batch and after every trust-region event
///   iteration  before every training epoch
enum class NormalizerRefit { tr_event, iteration };

std::string_view to_string(NormalizerRefit r);
NormalizerRefit normalizer_refit_from_string(std::string_view name);

struct OptimizerConfig {
  std::string name = "EvoGrad2";
  LossVariant variant = LossVariant::evograd2;
  bool jacobian_attached = false;
  WeightSource weight_source = WeightSource::cma_gaussian;
  double softmax_temperature = 0.1;

  double eps0_coeff = 0.4;
  double eps_factor = 0.97;
  double eps_min = 1e-4;
  double tr_shrink = 0.9;
  double step_size = 0.01;
  int n_max = 10;
  long budget = 150000;
  double movement_coeff = 0.2;
  double outlier_quantile = 0.1;
  MapKind map_kind = MapKind::tanh;

  std::vector<int> hidden_layers = {10, 15, 10};
  double learn_rate = 1e-3;
  int batch_size = 64;
  TrainAlgorithm train_algorithm = TrainAlgorithm::adam;
  int epochs_per_iteration = 1;
  bool reset_net_on_tr = false;

  /// 0 selects the adaptive sizes.
  int n_samples = 0;
  int n_pairs = 0;
  long buffer_capacity = 0;

  StallRule stall_rule = StallRule::strict_worsening;
  NormalizerRefit normalizer_refit = NormalizerRefit::tr_event;

  /// Stop early once the normalized best value drops below this.
  std::optional<double> stop_below;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  LossConfig loss_config() const;

  nlohmann::json to_json() const;
  static OptimizerConfig from_json(const nlohmann::json& j);
  /// FNV-1a of the canonical JSON form.
  std::string hash() const;

  /// Named presets: EvoGrad2, EvoGrad, EvoGrad-0.1, HGrad, HGrad-Attached, EGL.
  static OptimizerConfig preset(std::string_view name);
  static const std::vector<std::string>& preset_names();
};

struct AdaptiveSizes {
  int n_samples = 0;
  int n_pairs = 0;
};

/// n_s = 8 ceil(sqrt(N)), n_p = 2000 ceil(sqrt(N)).
AdaptiveSizes adaptive_sizes(int dim);
/// 20000 ceil(sqrt(N)).
long default_buffer_capacity(int dim);
/// Exact integer ceil(sqrt(n)).
int ceil_sqrt(int n);

struct BufferEntry {
  Vec u;         // normalized coordinates in the current trust region
  Vec x;         // search-space point
  double y = 0;  // raw objective value
  int generation = 0;
};

/// Evaluated samples, oldest first, with a hard capacity.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(long capacity);

  void add(BufferEntry e);
  /// Re-express every entry in the frame of `tr`; entries outside its image
  /// are evicted. Returns the number evicted.
  std::size_t remap(const TrustRegion& tr);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  long capacity() const { return capacity_; }
  const BufferEntry& operator[](std::size_t i) const { return entries_[i]; }
  const std::deque<BufferEntry>& entries() const { return entries_; }

 private:
  long capacity_;
  std::deque<BufferEntry> entries_;
};

/// Ordered index pair (anchor, probe).
struct IndexPair {
  std::size_t anchor;
  std::size_t probe;
};

/// Up to n_pairs draws, with replacement, uniform over the ordered pairs
/// (i, j), i != j, with ||u_i - u_j|| <= eps. Small point sets are enumerated.
/// Larger ones are projected on a random direction and sorted; an anchor is
/// drawn proportionally to the number of points in its projected eps-window
/// and a probe uniformly inside it, and the draw is accepted when the full
/// distance is within eps. The O(|D|^2) candidate set is never materialized
/// for large buffers. Stops after max_attempts proposals.
std::vector<IndexPair> sample_pair_indices(const std::vector<Vec>& points, double eps, int n_pairs, Rng& rng,
                                           long max_attempts = 0);

/// u - alpha * g(u).
Vec descent_update(const GradNet& net, const Vec& u, double alpha);

/// Algorithm state machine for one run. run() drives the full loop; the
/// individual phases are public so they can be exercised in isolation.
class EvoGradOptimizer {
 public:
  EvoGradOptimizer(const Problem& problem, OptimizerConfig cfg, std::uint64_t seed,
                   const std::optional<Vec>& start = std::nullopt);

  RunRecord run();

  /// Samples n_s points in the eps-ball around u_k (fewer when the budget is
  /// short), evaluates them and feeds them to the buffer and the CMA state.
  /// Returns the number of evaluated samples.
  int explore();
  /// Training pairs drawn from the buffer, weighted per mini-batch chunk.
  std::vector<TaylorPair> build_pairs();
  EpochResult train(const std::vector<TaylorPair>& pairs);
  /// Gradient step, evaluation and stall bookkeeping. Returns the new iterate.
  Vec descent_step();
  /// Trust-region event: interior shrinks and decays eps, boundary shifts only.
  ConvergenceEvent handle_convergence();
  bool stalled() const { return stall_count_ >= cfg_.n_max; }

  const OptimizerConfig& config() const { return cfg_; }
  const Vec& iterate() const { return u_k_; }
  double eps() const { return eps_; }
  int stall_count() const { return stall_count_; }
  double movement() const { return movement_; }
  const TrustRegion& trust_region() const { return tr_; }
  const CmaState& cma() const { return cma_; }
  const GradNet& net() const { return net_; }
  GradNet& net() { return net_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const MeteredObjective& objective() const { return obj_; }
  const ValueNormalizer& normalizer() const { return normalizer_; }
  const RunRecord& record() const { return rec_; }
  int n_samples() const { return n_samples_; }
  int n_pairs() const { return n_pairs_; }

 private:
  void reset_cma();
  void refit_normalizer();
  double evaluate(const Vec& u, Vec* x_out);
  Vec clamp_normalized(Vec u) const;

  OptimizerConfig cfg_;
  MeteredObjective obj_;
  Rng explore_rng_;
  Rng pair_rng_;
  Rng init_rng_;
  int n_samples_;
  int n_pairs_;
  TrustRegion tr_;
  ReplayBuffer buffer_;
  GradNet net_;
  SurrogateTrainer trainer_;
  CmaState cma_;
  ValueNormalizer normalizer_;
  bool normalizer_fitted_ = false;
  Vec u_k_;
  double f_k_;
  double best_descent_f_;
  double eps0_;
  double eps_;
  int interior_events_ = 0;
  int stall_count_ = 0;
  double movement_ = 0.0;
  RunRecord rec_;
  long diverged_epochs_ = 0;
  long weight_fallbacks_ = 0;
  long empty_pair_sets_ = 0;
};

/// Convenience wrapper: EvoGradOptimizer(problem, cfg, seed, start).run().
RunRecord evograd_run(const Problem& problem, const OptimizerConfig& cfg, std::uint64_t seed,
                      const std::optional<Vec>& start = std::nullopt);

}  // namespace evograd
