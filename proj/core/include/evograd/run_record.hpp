#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "evograd/numerics.hpp"

namespace evograd {

class MeteredObjective;

struct TrajectoryRow {
  long evals = 0;
  double f_best = 0.0;
  double f_best_normalized = 0.0;
};

struct TrEventRow {
  int generation = 0;
  std::string kind;  // "interior", "boundary" or "restart"
  long evals = 0;
  double movement = 0.0;
  double eps = 0.0;
  Vec center;
  Vec scale;
};

/// Trace of a single optimizer run. Serialization is deterministic: equal
/// records produce byte-identical text.
struct RunRecord {
  std::string problem;
  int dim = 0;
  std::string algorithm;
  std::string config_hash;
  std::uint64_t seed = 0;
  long budget = 0;
  long evals_used = 0;
  double f_best = 0.0;
  double f_best_normalized = 0.0;
  Vec x_best;
  std::optional<long> first_solved_evals;
  std::vector<TrajectoryRow> trajectory;
  std::vector<TrEventRow> events;
  std::vector<std::string> notes;

  bool solved() const;

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
  std::string serialize() const;
};

/// 16 hex digits of FNV-1a 64 over the text.
std::string fnv1a_hex(std::string_view text);

/// Appends a row for every new best since the last row, then one for the
/// current meter position (skipped when it is already the last row).
void record_progress(RunRecord& rec, const MeteredObjective& obj);

/// Copies budget usage and best-so-far from the objective into the record and
/// appends a final trajectory row.
void finalize_record(RunRecord& rec, const MeteredObjective& obj);

/// Atomic write (temporary file + rename). Throws IoError.
void write_record(const std::filesystem::path& path, const RunRecord& rec);
RunRecord read_record(const std::filesystem::path& path);

}  // namespace evograd
