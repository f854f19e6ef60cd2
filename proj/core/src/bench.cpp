#include "evograd/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "evograd/error.hpp"

namespace evograd {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Algorithms

const std::vector<std::string>& AlgorithmSpec::names() {
  static const std::vector<std::string> all = [] {
    std::vector<std::string> n = OptimizerConfig::preset_names();
    n.insert(n.end(), {"CMA", "CMA-TR", "CMA-TR-tanh"});
    return n;
  }();
  return all;
}

AlgorithmSpec AlgorithmSpec::preset(const std::string& name) {
  AlgorithmSpec a;
  a.name = name;
  if (name == "CMA" || name == "CMA-TR" || name == "CMA-TR-tanh") {
    a.kind = Kind::cma;
    a.cma.restart_on_stop = name != "CMA";
    a.cma.map_kind = name == "CMA-TR-tanh" ? MapKind::tanh : MapKind::linear;
    return a;
  }
  a.optimizer = OptimizerConfig::preset(name);
  return a;
}

AlgorithmSpec AlgorithmSpec::from_json(const nlohmann::json& j) {
  if (j.is_string()) return preset(j.get<std::string>());
  if (!j.is_object() || !j.contains("name")) throw ConfigError("algorithm entry needs a name");
  const std::string name = j.at("name").get<std::string>();
  AlgorithmSpec a = preset(name);
  if (a.kind == Kind::gradient) {
    a.optimizer = OptimizerConfig::from_json(j);
    return a;
  }
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "name") continue;
      if (key == "gamma") a.cma.gamma = value.get<double>();
      else if (key == "sigma0") a.cma.sigma0 = value.get<double>();
      else if (key == "lambda") a.cma.lambda = value.get<int>();
      else if (key == "map_kind") a.cma.map_kind = map_kind_from_string(value.get<std::string>());
      else if (key == "max_condition") a.cma.max_condition = value.get<double>();
      else if (key == "min_spread") a.cma.min_spread = value.get<double>();
      else if (key == "stall_factor") a.cma.stall_factor = value.get<int>();
      else
        throw ConfigError("unknown CMA field '" + key +
                          "' (valid: gamma, sigma0, lambda, map_kind, max_condition, min_spread, stall_factor)");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed CMA algorithm entry: ") + e.what());
  }
  return a;
}

nlohmann::json AlgorithmSpec::to_json() const {
  if (kind == Kind::gradient) return optimizer.to_json();
  nlohmann::json j = cma.to_json();
  j.erase("budget");
  j.erase("restart_on_stop");
  j["name"] = name;
  return j;
}

// ---------------------------------------------------------------------------
// Suite spec

long desk_budget(int dim) {
  const double b = std::floor(50.0 * dim * std::sqrt(static_cast<double>(dim)));
  return std::min(150000L, static_cast<long>(b));
}

namespace {

SuiteSpec grid(const std::vector<int>& dims, std::optional<long> budget) {
  SuiteSpec s;
  for (int d : dims)
    for (const auto& f : suite_function_names()) s.problems.push_back({f, d});
  for (const auto& n : AlgorithmSpec::names())
    if (n != "CMA-TR-tanh") s.algorithms.push_back(AlgorithmSpec::preset(n));
  for (std::uint64_t k = 0; k < 10; ++k) s.seeds.push_back(k);
  s.budget = budget;
  return s;
}

}  // namespace

SuiteSpec SuiteSpec::desk() { return grid({2, 5, 10, 20}, std::nullopt); }
SuiteSpec SuiteSpec::full() { return grid({2, 5, 10, 20, 40, 80}, 150000); }

SuiteSpec SuiteSpec::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("suite spec must be a JSON object");
  SuiteSpec s = desk();
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "problems") {
        s.problems.clear();
        for (const auto& p : value) s.problems.push_back({p.at("name").get<std::string>(), p.at("dim").get<int>()});
      } else if (key == "functions" || key == "dims") {
        // handled below
      } else if (key == "algorithms") {
        s.algorithms.clear();
        for (const auto& a : value) s.algorithms.push_back(AlgorithmSpec::from_json(a));
      } else if (key == "seeds") {
        s.seeds = value.get<std::vector<std::uint64_t>>();
      } else if (key == "budget") {
        s.budget = value.is_null() ? std::nullopt : std::optional<long>(value.get<long>());
      } else {
        throw ConfigError("unknown suite spec field '" + key +
                          "' (valid: problems, functions, dims, algorithms, seeds, budget)");
      }
    }
    if (j.contains("dims") || j.contains("functions")) {
      if (j.contains("problems")) throw ConfigError("suite spec: give either problems or functions/dims");
      const auto dims = j.contains("dims") ? j.at("dims").get<std::vector<int>>() : std::vector<int>{2, 5, 10, 20};
      const auto fns = j.contains("functions") ? j.at("functions").get<std::vector<std::string>>()
                                               : suite_function_names();
      s.problems.clear();
      for (int d : dims)
        for (const auto& f : fns) s.problems.push_back({f, d});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed suite spec: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json SuiteSpec::to_json() const {
  nlohmann::json p = nlohmann::json::array();
  for (const auto& pr : problems) p.push_back({{"name", pr.name}, {"dim", pr.dim}});
  nlohmann::json a = nlohmann::json::array();
  for (const auto& al : algorithms) a.push_back(al.to_json());
  return {{"problems", p},
          {"algorithms", a},
          {"seeds", seeds},
          {"budget", budget ? nlohmann::json(*budget) : nlohmann::json(nullptr)}};
}

void SuiteSpec::validate() const {
  if (problems.empty() || algorithms.empty() || seeds.empty())
    throw ConfigError("suite spec needs at least one problem, algorithm and seed");
  const auto& fns = suite_function_names();
  const auto& dims = supported_dims();
  std::set<std::string> ids;
  for (const auto& p : problems) {
    if (std::find(fns.begin(), fns.end(), p.name) == fns.end())
      throw ConfigError("unknown suite function '" + p.name + "'");
    if (std::find(dims.begin(), dims.end(), p.dim) == dims.end())
      throw ConfigError("unsupported dimension " + std::to_string(p.dim));
    if (!ids.insert(p.name + "_d" + std::to_string(p.dim)).second)
      throw ConfigError("duplicate problem " + p.name + " dim " + std::to_string(p.dim));
  }
  std::set<std::string> names;
  for (const auto& a : algorithms)
    if (!names.insert(a.name).second) throw ConfigError("duplicate algorithm '" + a.name + "'");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("duplicate seeds in suite spec");
  if (budget && *budget < 1) throw ConfigError("suite budget must be positive");
}

// ---------------------------------------------------------------------------
// Running

Vec start_point(const Problem& problem, std::uint64_t seed) {
  Rng rng(mix64(problem_seed(problem.name(), problem.dim()) ^ mix64(seed + 0x5EED)));
  Vec x(problem.dim());
  for (int i = 0; i < problem.dim(); ++i) {
    const double lo = problem.lower()[i];
    const double w = problem.upper()[i] - lo;
    x[i] = lo + w * (0.05 + 0.9 * rng.uniform());
  }
  return x;
}

std::string cell_filename(const std::string& algorithm, const std::string& problem_id, std::uint64_t seed) {
  return algorithm + "__" + problem_id + "__s" + std::to_string(seed) + ".run.json";
}

RunRecord run_cell(const Problem& problem, const AlgorithmSpec& algorithm, std::uint64_t seed, long budget) {
  const Vec start = start_point(problem, seed);
  RunRecord rec;
  if (algorithm.kind == AlgorithmSpec::Kind::cma) {
    CmaRunConfig cfg = algorithm.cma;
    cfg.budget = budget;
    Rng rng(seed);
    rec = cma_tr_run(problem, cfg, rng, start);
  } else {
    OptimizerConfig cfg = algorithm.optimizer;
    cfg.budget = budget;
    rec = evograd_run(problem, cfg, seed, start);
  }
  rec.algorithm = algorithm.name;
  return rec;
}

SuiteResult run_suite(const SuiteSpec& spec, const RunOptions& options) {
  spec.validate();
  std::set<int> dims;
  for (const auto& p : spec.problems) dims.insert(p.dim);
  const auto suite = make_suite(std::vector<int>(dims.begin(), dims.end()), options.suite_cache);
  std::vector<const Problem*> problems;
  for (const auto& ref : spec.problems)
    for (const auto& p : suite)
      if (p.name() == ref.name && p.dim() == ref.dim) problems.push_back(&p);

  struct Cell {
    const Problem* problem;
    const AlgorithmSpec* algorithm;
    std::uint64_t seed;
    std::string file;
  };
  std::vector<Cell> cells;
  for (const auto* p : problems)
    for (const auto& a : spec.algorithms)
      for (auto s : spec.seeds) cells.push_back({p, &a, s, cell_filename(a.name, p->id(), s)});

  if (options.out_dir) fs::create_directories(*options.out_dir);

  SuiteResult result;
  std::vector<std::optional<RunRecord>> slots(cells.size());
  std::vector<std::optional<CellFailure>> failed(cells.size());
  std::vector<char> skipped(cells.size(), 0);
  std::atomic<std::size_t> next{0};
  std::mutex callback_mutex;

  auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& c = cells[i];
      try {
        const auto path = options.out_dir ? std::optional<fs::path>(*options.out_dir / c.file) : std::nullopt;
        if (path && options.resume && fs::exists(*path)) {
          slots[i] = read_record(*path);
          skipped[i] = 1;
          continue;
        }
        const long budget = spec.budget ? *spec.budget : desk_budget(c.problem->dim());
        RunRecord rec = run_cell(*c.problem, *c.algorithm, c.seed, budget);
        if (path) write_record(*path, rec);
        if (options.on_record) {
          std::lock_guard lock(callback_mutex);
          options.on_record(rec);
        }
        slots[i] = std::move(rec);
      } catch (const std::exception& e) {
        failed[i] = CellFailure{c.file, e.what()};
      }
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(cells.size())));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (failed[i]) {
      result.failures.push_back(*failed[i]);
      continue;
    }
    if (skipped[i]) ++result.skipped;
    else ++result.executed;
    result.records.push_back(std::move(*slots[i]));
  }
  return result;
}

std::vector<RunRecord> load_records(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.size() > 9 && name.ends_with(".run.json")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(read_record(f));
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

const MetricsRow* MetricsTable::find(const std::string& algorithm) const {
  for (const auto& r : rows)
    if (r.algorithm == algorithm) return &r;
  return nullptr;
}

namespace {

double final_normalized(const RunRecord& r) {
  if (!std::isfinite(r.f_best_normalized))
    throw DomainError("record " + r.algorithm + "/" + r.problem + " has no normalized value");
  return r.f_best_normalized;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double population_std(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

double sample_variance(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

MetricsTable aggregate(const std::vector<RunRecord>& records) {
  if (records.empty()) throw DomainError("aggregate: no records");
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunRecord*>> groups;
  for (const auto& r : records) {
    if (!groups.count(r.algorithm)) order.push_back(r.algorithm);
    groups[r.algorithm].push_back(&r);
  }
  MetricsTable table;
  for (const auto& name : order) {
    const auto& group = groups[name];
    MetricsRow row;
    row.algorithm = name;
    row.cells = group.size();
    std::vector<double> finals;
    std::vector<double> solve_evals;
    for (const auto* r : group) {
      const double v = final_normalized(*r);
      finals.push_back(v);
      if (v < kSolvedThreshold) {
        ++row.solved;
        if (r->first_solved_evals) solve_evals.push_back(static_cast<double>(*r->first_solved_evals));
      }
    }
    row.solved_fraction = static_cast<double>(row.solved) / static_cast<double>(row.cells);
    if (!solve_evals.empty()) row.budget_to_solve = mean_of(solve_evals);
    row.mean_norm = mean_of(finals);
    row.std_norm = population_std(finals);
    table.rows.push_back(row);
  }
  return table;
}

double welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw DomainError("welch_t_test: each sample needs at least two values");
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  const double va = sample_variance(a) / static_cast<double>(a.size());
  const double vb = sample_variance(b) / static_cast<double>(b.size());
  const double se2 = va + vb;
  if (se2 == 0.0) return ma == mb ? 1.0 : 0.0;
  const double t = (ma - mb) / std::sqrt(se2);
  const double df = se2 * se2 /
                    (va * va / static_cast<double>(a.size() - 1) + vb * vb / static_cast<double>(b.size() - 1));
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

double coefficient_of_variation(const std::vector<double>& values) {
  if (values.empty()) throw DomainError("coefficient_of_variation: no values");
  const double sd = population_std(values);
  if (sd == 0.0) return 0.0;
  const double m = mean_of(values);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return std::abs(sd / m);
}

std::vector<double> success_thresholds() {
  std::vector<double> t;
  const double exact[] = {1e-3, 1e-2, 1e-1, 1.0};
  for (int k = 0; k <= 12; ++k) t.push_back(k % 4 == 0 ? exact[k / 4] : std::pow(10.0, -3.0 + k / 4.0));
  return t;
}

// ---------------------------------------------------------------------------
// Emit

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream o;
  o << std::setprecision(17) << v;
  return o.str();
}

struct Curves {
  struct Point {
    long evals;
    double median, q25, q75;
  };
  std::vector<std::pair<std::string, std::vector<Point>>> convergence;
  std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> success;
};

double normalized_at(const RunRecord& r, long evals) {
  double v = 1.0;
  for (const auto& row : r.trajectory) {
    if (row.evals > evals) break;
    if (std::isfinite(row.f_best_normalized)) v = row.f_best_normalized;
  }
  return v;
}

Curves build_curves(const std::vector<RunRecord>& records, const MetricsTable& table) {
  Curves c;
  const auto thresholds = success_thresholds();
  for (const auto& row : table.rows) {
    std::vector<const RunRecord*> group;
    long max_evals = 1;
    for (const auto& r : records)
      if (r.algorithm == row.algorithm) {
        group.push_back(&r);
        max_evals = std::max(max_evals, r.evals_used);
      }
    // Log-spaced grid from 1 to the largest budget used, 40 points.
    std::vector<long> grid;
    for (int k = 0; k <= 40; ++k) {
      const long e = std::lround(std::pow(static_cast<double>(max_evals), k / 40.0));
      if (grid.empty() || e > grid.back()) grid.push_back(e);
    }
    std::vector<Curves::Point> pts;
    for (long e : grid) {
      std::vector<double> vals;
      for (const auto* r : group) vals.push_back(normalized_at(*r, e));
      pts.push_back({e, quantile(vals, 0.5), quantile(vals, 0.25), quantile(vals, 0.75)});
    }
    c.convergence.emplace_back(row.algorithm, std::move(pts));

    std::vector<std::pair<double, double>> succ;
    for (double t : thresholds) {
      std::size_t hit = 0;
      for (const auto* r : group)
        if (final_normalized(*r) < t) ++hit;
      succ.emplace_back(t, static_cast<double>(hit) / static_cast<double>(group.size()));
    }
    c.success.emplace_back(row.algorithm, std::move(succ));
  }
  return c;
}

nlohmann::json metrics_json(const MetricsTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"algorithm", r.algorithm},
                    {"cells", r.cells},
                    {"solved", r.solved},
                    {"unsolved", r.cells - r.solved},
                    {"solved_fraction", r.solved_fraction},
                    {"budget_to_solve", r.budget_to_solve ? nlohmann::json(*r.budget_to_solve) : nlohmann::json(nullptr)},
                    {"mean_norm", r.mean_norm},
                    {"std_norm", r.std_norm}});
  return rows;
}

std::string metrics_csv(const MetricsTable& t) {
  std::ostringstream o;
  o << "algorithm,cells,solved,unsolved,solved_fraction,budget_to_solve,mean_norm,std_norm\n";
  for (const auto& r : t.rows)
    o << r.algorithm << ',' << r.cells << ',' << r.solved << ',' << (r.cells - r.solved) << ','
      << fmt(r.solved_fraction) << ',' << (r.budget_to_solve ? fmt(*r.budget_to_solve) : "") << ','
      << fmt(r.mean_norm) << ',' << fmt(r.std_norm) << '\n';
  return o.str();
}

std::vector<std::pair<std::string, std::string>> render(const Curves& c, const MetricsTable& t, EmitFormat format) {
  std::vector<std::pair<std::string, std::string>> files;
  if (format == EmitFormat::csv) {
    files.emplace_back("metrics.csv", metrics_csv(t));
    std::ostringstream conv;
    conv << "algorithm,evals,median,q25,q75\n";
    for (const auto& [alg, pts] : c.convergence)
      for (const auto& p : pts)
        conv << alg << ',' << p.evals << ',' << fmt(p.median) << ',' << fmt(p.q25) << ',' << fmt(p.q75) << '\n';
    files.emplace_back("convergence.csv", conv.str());
    std::ostringstream succ;
    succ << "algorithm,threshold,solved_fraction\n";
    for (const auto& [alg, pts] : c.success)
      for (const auto& [th, frac] : pts) succ << alg << ',' << fmt(th) << ',' << fmt(frac) << '\n';
    files.emplace_back("success.csv", succ.str());
  } else {
    files.emplace_back("metrics.json", metrics_json(t).dump(1) + "\n");
    nlohmann::json conv = nlohmann::json::object();
    for (const auto& [alg, pts] : c.convergence) {
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& p : pts) rows.push_back({{"evals", p.evals}, {"median", p.median}, {"q25", p.q25}, {"q75", p.q75}});
      conv[alg] = rows;
    }
    files.emplace_back("convergence.json", conv.dump(1) + "\n");
    nlohmann::json succ = nlohmann::json::object();
    for (const auto& [alg, pts] : c.success) {
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& [th, frac] : pts) rows.push_back({{"threshold", th}, {"solved_fraction", frac}});
      succ[alg] = rows;
    }
    files.emplace_back("success.json", succ.dump(1) + "\n");
  }
  return files;
}

}  // namespace

std::vector<fs::path> emit(const std::vector<RunRecord>& records, const MetricsTable& table, const fs::path& dir,
                           EmitFormat format) {
  if (records.empty()) throw DomainError("emit: no records");
  if (table.rows.empty()) throw DomainError("emit: empty metrics table");
  if (!fs::is_directory(dir)) throw IoError("emit: output directory does not exist: " + dir.string());
  const auto files = render(build_curves(records, table), table, format);

  std::vector<fs::path> temps;
  std::vector<fs::path> finals;
  auto cleanup = [&] {
    std::error_code ec;
    for (const auto& p : temps) fs::remove(p, ec);
    for (const auto& p : finals) fs::remove(p, ec);
  };
  try {
    for (const auto& [name, body] : files) {
      const fs::path tmp = dir / (name + ".tmp");
      temps.push_back(tmp);
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("emit: cannot write " + tmp.string());
      out << body;
      out.close();
      if (!out) throw IoError("emit: write failed for " + tmp.string());
    }
    for (std::size_t i = 0; i < files.size(); ++i) {
      const fs::path target = dir / files[i].first;
      fs::rename(temps[i], target);
      finals.push_back(target);
    }
  } catch (const fs::filesystem_error& e) {
    cleanup();
    throw IoError(std::string("emit: ") + e.what());
  } catch (...) {
    cleanup();
    throw;
  }
  return finals;
}

MetricsTable read_metrics_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  MetricsTable t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
    if (line.back() == ',') cols.emplace_back();
    if (cols.size() != 8) throw IoError("malformed metrics row: " + line);
    MetricsRow r;
    r.algorithm = cols[0];
    r.cells = std::stoul(cols[1]);
    r.solved = std::stoul(cols[2]);
    r.solved_fraction = std::stod(cols[4]);
    if (!cols[5].empty()) r.budget_to_solve = std::stod(cols[5]);
    r.mean_norm = std::stod(cols[6]);
    r.std_norm = std::stod(cols[7]);
    t.rows.push_back(r);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Sweep

std::vector<std::string> sweep_parameters() {
  std::vector<std::string> names;
  const nlohmann::json defaults = OptimizerConfig{}.to_json();
  for (const auto& [key, value] : defaults.items())
    if (value.is_number() && key != "budget") names.push_back(key);
  return names;
}

nlohmann::json SweepReport::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points)
    pts.push_back({{"value", p.value},
                   {"solved_fraction", p.metrics.solved_fraction},
                   {"budget_to_solve",
                    p.metrics.budget_to_solve ? nlohmann::json(*p.metrics.budget_to_solve) : nlohmann::json(nullptr)},
                   {"mean_norm", p.metrics.mean_norm},
                   {"std_norm", p.metrics.std_norm}});
  return {{"param", param}, {"points", pts}, {"cv", cv}};
}

SweepReport sweep(const SuiteSpec& suite, const OptimizerConfig& base, const std::string& param,
                  const std::vector<double>& values, const RunOptions& options) {
  const auto valid = sweep_parameters();
  if (std::find(valid.begin(), valid.end(), param) == valid.end()) {
    std::string names;
    for (const auto& n : valid) names += (names.empty() ? "" : ", ") + n;
    throw ConfigError("unknown sweep parameter '" + param + "' (valid: " + names + ")");
  }
  if (values.empty()) throw ConfigError("sweep: no values");

  SweepReport report;
  report.param = param;
  std::vector<double> metric;
  for (double v : values) {
    nlohmann::json j = base.to_json();
    if (j.at(param).is_number_integer()) {
      if (v != std::floor(v)) throw ConfigError("sweep: " + param + " takes integer values");
      j[param] = static_cast<long>(v);
    } else {
      j[param] = v;
    }
    AlgorithmSpec alg;
    alg.kind = AlgorithmSpec::Kind::gradient;
    alg.optimizer = OptimizerConfig::from_json(j);
    alg.name = base.name;
    SuiteSpec spec = suite;
    spec.algorithms = {alg};
    RunOptions opts = options;
    if (options.out_dir) {
      std::ostringstream label;
      label << param << '=' << v;
      opts.out_dir = *options.out_dir / label.str();
    }
    const SuiteResult res = run_suite(spec, opts);
    if (!res.failures.empty())
      throw Error("sweep: cell " + res.failures.front().cell + " failed: " + res.failures.front().message);
    const MetricsTable table = aggregate(res.records);
    report.points.push_back({v, table.rows.front()});
    metric.push_back(table.rows.front().mean_norm);
  }
  report.cv = coefficient_of_variation(metric);
  return report;
}

}  // namespace evograd
