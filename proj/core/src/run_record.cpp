#include "evograd/run_record.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "evograd/error.hpp"
#include "evograd/objectives.hpp"

namespace evograd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }
double num(const nlohmann::json& j) { return j.is_null() ? kNaN : j.get<double>(); }

nlohmann::json vec(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
Vec vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

bool RunRecord::solved() const { return std::isfinite(f_best_normalized) && f_best_normalized < kSolvedThreshold; }

nlohmann::json RunRecord::to_json() const {
  nlohmann::json traj = nlohmann::json::array();
  for (const auto& r : trajectory) traj.push_back({r.evals, num(r.f_best), num(r.f_best_normalized)});
  nlohmann::json ev = nlohmann::json::array();
  for (const auto& e : events)
    ev.push_back({{"generation", e.generation},
                  {"kind", e.kind},
                  {"evals", e.evals},
                  {"movement", num(e.movement)},
                  {"eps", num(e.eps)},
                  {"center", vec(e.center)},
                  {"scale", vec(e.scale)}});
  return {{"problem", problem},
          {"dim", dim},
          {"algorithm", algorithm},
          {"config_hash", config_hash},
          {"seed", seed},
          {"budget", budget},
          {"evals_used", evals_used},
          {"f_best", num(f_best)},
          {"f_best_normalized", num(f_best_normalized)},
          {"x_best", vec(x_best)},
          {"first_solved_evals", first_solved_evals ? nlohmann::json(*first_solved_evals) : nlohmann::json(nullptr)},
          {"trajectory_columns", {"evals_used", "f_best", "f_best_normalized"}},
          {"trajectory", traj},
          {"tr_events", ev},
          {"notes", notes}};
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
  try {
    RunRecord r;
    r.problem = j.at("problem").get<std::string>();
    r.dim = j.at("dim").get<int>();
    r.algorithm = j.at("algorithm").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.budget = j.at("budget").get<long>();
    r.evals_used = j.at("evals_used").get<long>();
    r.f_best = num(j.at("f_best"));
    r.f_best_normalized = num(j.at("f_best_normalized"));
    r.x_best = vec(j.at("x_best"));
    if (!j.at("first_solved_evals").is_null()) r.first_solved_evals = j.at("first_solved_evals").get<long>();
    for (const auto& row : j.at("trajectory"))
      r.trajectory.push_back({row.at(0).get<long>(), num(row.at(1)), num(row.at(2))});
    for (const auto& e : j.at("tr_events"))
      r.events.push_back({e.at("generation").get<int>(), e.at("kind").get<std::string>(), e.at("evals").get<long>(),
                          num(e.at("movement")), num(e.at("eps")), vec(e.at("center")), vec(e.at("scale"))});
    r.notes = j.at("notes").get<std::vector<std::string>>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed run record: ") + e.what());
  }
}

std::string RunRecord::serialize() const { return to_json().dump(1) + "\n"; }

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex;
  out.width(16);
  out.fill('0');
  out << h;
  return out.str();
}

void record_progress(RunRecord& rec, const MeteredObjective& obj) {
  if (!obj.has_best()) return;
  const long last = rec.trajectory.empty() ? 0 : rec.trajectory.back().evals;
  const auto& imp = obj.improvements();
  auto it = std::upper_bound(imp.begin(), imp.end(), last,
                             [](long e, const std::pair<long, double>& p) { return e < p.first; });
  for (; it != imp.end(); ++it) rec.trajectory.push_back({it->first, it->second, obj.normalized(it->second)});
  if (rec.trajectory.back().evals != obj.used())
    rec.trajectory.push_back({obj.used(), obj.best_value(), obj.best_normalized()});
}

void finalize_record(RunRecord& rec, const MeteredObjective& obj) {
  rec.problem = obj.problem().id();
  rec.dim = obj.problem().dim();
  rec.budget = obj.meter().total();
  rec.evals_used = obj.used();
  if (obj.has_best()) {
    rec.f_best = obj.best_value();
    rec.f_best_normalized = obj.best_normalized();
    rec.x_best = obj.best_x();
  } else {
    rec.f_best = kNaN;
    rec.f_best_normalized = kNaN;
    rec.x_best = Vec();
  }
  rec.first_solved_evals = obj.first_solved();
  record_progress(rec, obj);
}

void write_record(const std::filesystem::path& path, const RunRecord& rec) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << rec.serialize();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move record into place at " + path.string());
  }
}

RunRecord read_record(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed run record " + path.string() + ": " + e.what());
  }
  return RunRecord::from_json(j);
}

}  // namespace evograd
