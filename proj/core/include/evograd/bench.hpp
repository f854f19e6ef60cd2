#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evograd/evo.hpp"
#include "evograd/objectives.hpp"
#include "evograd/optimizer.hpp"
#include "evograd/run_record.hpp"

namespace evograd {

/// A benchmarked algorithm: a gradient-learning preset or a CMA baseline.
struct AlgorithmSpec {
  enum class Kind { gradient, cma };

  std::string name;
  Kind kind = Kind::gradient;
  OptimizerConfig optimizer;
  CmaRunConfig cma;

  /// Gradient presets plus CMA, CMA-TR and CMA-TR-tanh.
  static AlgorithmSpec preset(const std::string& name);
  static const std::vector<std::string>& names();
  /// A bare name, or an object {"name": ..., <field overrides>}.
  static AlgorithmSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct ProblemRef {
  std::string name;
  int dim = 0;
};

struct SuiteSpec {
  std::vector<ProblemRef> problems;
  std::vector<AlgorithmSpec> algorithms;
  std::vector<std::uint64_t> seeds;
  /// Evaluations per cell; unset selects desk_budget(dim).
  std::optional<long> budget;

  /// Dims {2, 5, 10, 20}, every suite function, every algorithm, seeds 0..9.
  static SuiteSpec desk();
  /// Dims {2, ..., 80} at 150k evaluations per cell.
  static SuiteSpec full();
  static SuiteSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
  std::size_t cell_count() const { return problems.size() * algorithms.size() * seeds.size(); }
};

/// floor(50 * dim * sqrt(dim)), capped at 150000.
long desk_budget(int dim);

/// Seeded start point in the central 90% of the domain, shared by every
/// algorithm for a given (problem, seed).
Vec start_point(const Problem& problem, std::uint64_t seed);

/// "<algorithm>__<problem id>__s<seed>.run.json"
std::string cell_filename(const std::string& algorithm, const std::string& problem_id, std::uint64_t seed);

RunRecord run_cell(const Problem& problem, const AlgorithmSpec& algorithm, std::uint64_t seed, long budget);

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;
  unsigned threads = 1;
  /// Skip cells whose record file already exists in out_dir.
  bool resume = true;
  /// Manifest cache for suite y_max values.
  std::optional<std::filesystem::path> suite_cache;
  std::function<void(const RunRecord&)> on_record;
};

struct CellFailure {
  std::string cell;
  std::string message;
};

struct SuiteResult {
  /// Records in grid order (problem, algorithm, seed), including resumed ones.
  std::vector<RunRecord> records;
  std::size_t executed = 0;
  std::size_t skipped = 0;
  std::vector<CellFailure> failures;
};

SuiteResult run_suite(const SuiteSpec& spec, const RunOptions& options = {});

/// Every "*.run.json" record in dir, sorted by file name.
std::vector<RunRecord> load_records(const std::filesystem::path& dir);

struct MetricsRow {
  std::string algorithm;
  std::size_t cells = 0;
  std::size_t solved = 0;
  double solved_fraction = 0.0;
  /// Mean evaluations to first reach the solved threshold over solved cells.
  std::optional<double> budget_to_solve;
  double mean_norm = 0.0;
  /// Population standard deviation of the final normalized values.
  double std_norm = 0.0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  const MetricsRow* find(const std::string& algorithm) const;
};

/// Rows in order of first appearance of each algorithm.
MetricsTable aggregate(const std::vector<RunRecord>& records);

/// Two-sided Welch t-test p-value.
double welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Population std / mean. 0 when every value is equal.
double coefficient_of_variation(const std::vector<double>& values);

/// 10^(-3 + k/4), k = 0..12.
std::vector<double> success_thresholds();

enum class EmitFormat { csv, json };

/// Writes metrics, convergence (median and quartiles of the normalized best
/// value on an evaluation grid) and success-rate-vs-threshold tables into an
/// existing directory. Either every file is written or none is left behind.
/// Returns the written paths.
std::vector<std::filesystem::path> emit(const std::vector<RunRecord>& records, const MetricsTable& table,
                                        const std::filesystem::path& dir, EmitFormat format);

/// Parses a metrics CSV written by emit.
MetricsTable read_metrics_csv(const std::filesystem::path& path);

struct SweepPoint {
  double value = 0.0;
  MetricsRow metrics;
};

struct SweepReport {
  std::string param;
  std::vector<SweepPoint> points;
  /// CV of mean_norm across the swept values.
  double cv = 0.0;
  nlohmann::json to_json() const;
};

/// Numeric OptimizerConfig fields accepted by sweep.
std::vector<std::string> sweep_parameters();

/// Runs `suite` once per value with `param` of the base gradient config set to
/// that value. Record files go to <out_dir>/<param>=<value>/ when out_dir is set.
SweepReport sweep(const SuiteSpec& suite, const OptimizerConfig& base, const std::string& param,
                  const std::vector<double>& values, const RunOptions& options = {});

}  // namespace evograd
