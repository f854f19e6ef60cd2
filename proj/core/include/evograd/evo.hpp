#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evograd/numerics.hpp"
#include "evograd/objectives.hpp"
#include "evograd/run_record.hpp"
#include "evograd/trust_region.hpp"

namespace evograd {

/// Strategy parameters of CMA-ES (Hansen's defaults as functions of n and lambda).
struct CmaParams {
  int dim = 0;
  int lambda = 0;
  int mu = 0;
  /// w_i proportional to log(mu + 1/2) - log(i), normalized to sum 1.
  std::vector<double> weights;
  double mu_eff = 0.0;
  double c_sigma = 0.0;
  double d_sigma = 0.0;
  double c_c = 0.0;
  double c_1 = 0.0;
  double c_mu = 0.0;

  static int default_lambda(int dim);
  /// lambda <= 0 selects default_lambda(dim).
  static CmaParams defaults(int dim, int lambda = 0);
  static std::vector<double> recombination_weights(int mu);
};

struct CmaState {
  Vec mean;
  double sigma = 1.0;
  Mat cov;
  Vec p_sigma;
  Vec p_c;
  CmaParams params;
  int generation = 0;

  /// Isotropic start: C = I, zero paths.
  static CmaState initial(const Vec& mean, double sigma, int lambda = 0);
  int dim() const { return static_cast<int>(mean.size()); }
};

struct Candidate {
  Vec x;
  double f = 0.0;
};

/// lambda draws m + sigma * L z. When C has no Cholesky factor it is repaired
/// in place and the factorization retried once; a second failure throws
/// DecompositionError, which callers treat as a request to reset the state.
std::vector<Vec> cma_sample(CmaState& state, int lambda, Rng& rng);

/// One generation of mean, path, covariance (rank-one + rank-mu) and
/// step-size adaptation. Non-finite fitness values are dropped; with fewer
/// than two finite candidates the state is returned unchanged.
CmaState cma_update(const CmaState& state, std::span<const Candidate> population);

/// Condition number of C (max / min eigenvalue).
double cma_condition(const CmaState& state);
/// sigma * sqrt(largest eigenvalue of C): the largest coordinate-wise
/// standard deviation of the search distribution.
double cma_spread(const CmaState& state);

enum class WeightSource { uniform, cma_gaussian, softmax };

std::string_view to_string(WeightSource s);
WeightSource weight_source_from_string(std::string_view name);

/// Importance weights for a batch of probe points. For a batch of size B the
/// floor is 1/(10 B) and the emitted weights are
///   w_i = floor + (1 - B floor) * softmax(logits)_i,
/// so every weight is at least the floor and the batch sums to 1.
/// logits are the Gaussian log density under the CMA distribution or
/// -f / temperature.
struct WeightMap {
  WeightSource source = WeightSource::cma_gaussian;
  double temperature = 0.1;
  const CmaState* cma = nullptr;
};

double weight_floor(std::size_t batch_size);

struct WeightBatch {
  std::vector<double> weights;
  /// The CMA covariance could not be factorized; uniform weights were used.
  bool fell_back = false;
};

WeightBatch weights_for(const WeightMap& map, std::span<const Vec> points, std::span<const double> fitness);

/// Floored softmax of arbitrary logits (the shared tail of weights_for).
std::vector<double> floored_softmax(std::span<const double> logits);

struct CmaRunConfig {
  long budget = 10000;
  MapKind map_kind = MapKind::linear;
  /// Trust-region shrink factor applied on every internal stop.
  double gamma = 0.9;
  /// Initial step size in normalized trust-region units.
  double sigma0 = 0.5;
  int lambda = 0;
  /// false: plain CMA-ES, the run ends at the first internal stop.
  bool restart_on_stop = true;
  double max_condition = 1e14;
  double min_spread = 1e-12;
  /// Stop after stall_factor * lambda generations without improvement.
  int stall_factor = 30;

  nlohmann::json to_json() const;
};

/// CMA-ES inside a trust region. On an internal stop the region is shrunk by
/// gamma around the best point of the last population and CMA restarts from
/// the new center. The run stops at budget exhaustion (or at the first stop
/// without restarts). `start` defaults to the domain center.
RunRecord cma_tr_run(const Problem& problem, const CmaRunConfig& cfg, Rng& rng,
                     const std::optional<Vec>& start = std::nullopt);

}  // namespace evograd
