#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "evograd/numerics.hpp"

namespace evograd {

/// A function value is "solved" when its normalized value is below this.
inline constexpr double kSolvedThreshold = 0.01;

struct KnownOptimum {
  Vec x;
  double f = 0.0;
};

/// Normalization bounds used for scoring: y_min is the known optimum and
/// y_max an empirical maximum over uniform samples of the domain.
struct ValueRange {
  double y_min = 0.0;
  double y_max = 1.0;
};

/// Minimization problem over a box domain. Immutable once built; safe to
/// evaluate from several threads.
class Problem {
 public:
  using Function = std::function<double(const Vec&)>;

  Problem(std::string name, int dim, Vec lower, Vec upper, Function f,
          std::optional<KnownOptimum> optimum = std::nullopt);

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  /// "<name>_d<dim>", unique inside a suite.
  std::string id() const;
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  Vec center() const { return 0.5 * (lower_ + upper_); }

  /// Direct evaluation, bypassing any budget. Only tests and the suite
  /// builder call this; optimizers go through MeteredObjective.
  double evaluate(const Vec& x) const;

  const std::optional<KnownOptimum>& known_optimum() const { return optimum_; }
  const std::optional<ValueRange>& range() const { return range_; }
  Problem with_range(ValueRange r) const;

 private:
  std::string name_;
  int dim_;
  Vec lower_;
  Vec upper_;
  std::shared_ptr<const Function> f_;
  std::optional<KnownOptimum> optimum_;
  std::optional<ValueRange> range_;
};

/// Names of the suite functions, in suite order.
const std::vector<std::string>& suite_function_names();
/// Dimensions make_suite accepts.
const std::vector<int>& supported_dims();

/// Orthogonal matrix used by the rotated functions, deterministic per
/// (name, dim). Exposed so tests can re-derive values independently.
Mat suite_rotation(const std::string& name, int dim);

/// Seed derived from a problem name and dimension (FNV-1a over the name).
std::uint64_t problem_seed(const std::string& name, int dim);

/// Gallagher-style multi-peak landscape:
///   f(x) = (10 - max_i w_i exp(-(1/2n) (x - y_i)^T R^T C_i R (x - y_i)))^2
/// Peak 0 carries weight 10 and is the global optimum (f = 0 at y_0).
class GallagherFunction {
 public:
  GallagherFunction(int dim, int peaks, std::uint64_t seed);

  double operator()(const Vec& x) const;
  /// Index of the peak attaining the max at x; 0 means x lies in the global basin.
  int dominant_peak(const Vec& x) const;
  const Vec& global_optimum() const { return centers_.front(); }
  int peaks() const { return static_cast<int>(weights_.size()); }

 private:
  Vec peak_values(const Vec& x) const;

  int dim_;
  Mat rotation_;
  std::vector<Vec> centers_;
  std::vector<Vec> rotated_centers_;
  std::vector<Vec> conditioning_;
  std::vector<double> weights_;
};

/// Builds a single suite problem (no value range attached).
Problem make_problem(const std::string& name, int dim);

/// Full suite: every function at every requested dimension, each with its
/// ValueRange attached. When `cache` is given, y_max values are read from /
/// written to that manifest file.
std::vector<Problem> make_suite(const std::vector<int>& dims,
                                const std::optional<std::filesystem::path>& cache = std::nullopt);

/// Empirical maximum of f over 10^4 uniform samples of the domain, seeded by
/// problem_seed(name, dim).
double empirical_y_max(const Problem& p, int samples = 10000);

/// Manifest rows (name, dim, bounds, y_min, y_max).
nlohmann::json suite_manifest(const std::vector<Problem>& problems);

struct NormalizedScore {
  double value = 0.0;
  bool solved() const { return value < kSolvedThreshold; }
};

/// (y - y_min) / (y_max - y_min), clamped to [0, 1].
NormalizedScore normalized_value(double y, double y_min, double y_max);

class BudgetMeter {
 public:
  explicit BudgetMeter(long total);

  long total() const { return total_; }
  long used() const { return used_; }
  long remaining() const { return total_ - used_; }
  bool exhausted() const { return used_ >= total_; }
  /// Consumes one unit; throws BudgetExhausted when none remain.
  void charge();

 private:
  long total_;
  long used_ = 0;
};

/// Problem + meter + best-so-far tracking. Every objective evaluation an
/// optimizer performs goes through here.
class MeteredObjective {
 public:
  MeteredObjective(const Problem& problem, long budget);

  /// f(x) for x in the search space; increments the meter by exactly one.
  double operator()(const Vec& x);

  const Problem& problem() const { return *problem_; }
  const BudgetMeter& meter() const { return meter_; }
  long used() const { return meter_.used(); }
  long remaining() const { return meter_.remaining(); }

  bool has_best() const { return best_x_.size() > 0; }
  double best_value() const { return best_f_; }
  const Vec& best_x() const { return best_x_; }
  /// Normalized best value, NaN when the problem carries no ValueRange.
  double best_normalized() const;
  /// Normalized y, NaN when the problem carries no ValueRange.
  double normalized(double y) const;
  /// (evaluation index, value) of every new best, in order.
  const std::vector<std::pair<long, double>>& improvements() const { return improvements_; }
  /// Evaluation index (1-based) at which the normalized best first fell
  /// below the solved threshold.
  std::optional<long> first_solved() const { return first_solved_; }

 private:
  const Problem* problem_;
  BudgetMeter meter_;
  double best_f_;
  Vec best_x_;
  std::optional<long> first_solved_;
  std::vector<std::pair<long, double>> improvements_;
};

/// evaluate_metered in functional form.
double evaluate_metered(const Problem& p, BudgetMeter& meter, const Vec& x);

}  // namespace evograd
