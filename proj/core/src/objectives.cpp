#include "evograd/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <utility>

#include "evograd/error.hpp"

namespace evograd {

namespace {

constexpr double kDomainHalfWidth = 5.0;
constexpr std::uint64_t kYMaxStream = 0x79D3A11ULL;

double sphere(const Vec& x) { return x.squaredNorm(); }

double rosenbrock(const Vec& x) {
  double s = 0.0;
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
    const double a = x[i + 1] - x[i] * x[i];
    const double b = 1.0 - x[i];
    s += 100.0 * a * a + b * b;
  }
  return s;
}

double ackley(const Vec& x) {
  const double n = static_cast<double>(x.size());
  double cos_sum = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) cos_sum += std::cos(2.0 * std::numbers::pi * x[i]);
  return -20.0 * std::exp(-0.2 * std::sqrt(x.squaredNorm() / n)) - std::exp(cos_sum / n) + 20.0 +
         std::numbers::e;
}

double schaffer(const Vec& x) {
  const Eigen::Index n = x.size();
  double s = 0.0;
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double si = std::sqrt(x[i] * x[i] + x[i + 1] * x[i + 1]);
    const double root = std::sqrt(si);
    const double sn = std::sin(50.0 * std::pow(si, 0.2));
    s += root + root * sn * sn;
  }
  const double mean = s / static_cast<double>(n - 1);
  return mean * mean;
}

double rastrigin_raw(const Vec& z) {
  double s = 10.0 * static_cast<double>(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) s += z[i] * z[i] - 10.0 * std::cos(2.0 * std::numbers::pi * z[i]);
  return s;
}

Vec ellipsoid_coefficients(int dim) {
  Vec c(dim);
  for (int i = 0; i < dim; ++i) {
    const double e = dim > 1 ? 6.0 * i / (dim - 1) : 0.0;
    c[i] = std::pow(10.0, e);
  }
  return c;
}

Mat random_rotation(int dim, Rng& rng) {
  Mat g(dim, dim);
  for (int j = 0; j < dim; ++j)
    for (int i = 0; i < dim; ++i) g(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  const Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < dim; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

Problem::Problem(std::string name, int dim, Vec lower, Vec upper, Function f, std::optional<KnownOptimum> optimum)
    : name_(std::move(name)),
      dim_(dim),
      lower_(std::move(lower)),
      upper_(std::move(upper)),
      f_(std::make_shared<const Function>(std::move(f))),
      optimum_(std::move(optimum)) {
  if (dim_ < 1) throw ConfigError("Problem: dimension must be positive");
  if (lower_.size() != dim_ || upper_.size() != dim_) throw ConfigError("Problem: bounds do not match dimension");
  if (!((upper_ - lower_).array() > 0.0).all()) throw ConfigError("Problem: empty domain");
}

std::string Problem::id() const { return name_ + "_d" + std::to_string(dim_); }

double Problem::evaluate(const Vec& x) const {
  if (x.size() != dim_) throw DomainError("Problem::evaluate: dimension mismatch for " + id());
  return (*f_)(x);
}

Problem Problem::with_range(ValueRange r) const {
  if (!(r.y_max > r.y_min)) throw DomainError("Problem::with_range: y_max must exceed y_min");
  Problem copy = *this;
  copy.range_ = r;
  return copy;
}

const std::vector<std::string>& suite_function_names() {
  static const std::vector<std::string> names = {"sphere", "ellipsoid", "rosenbrock", "rastrigin",
                                                 "ackley", "schaffer",  "gallagher"};
  return names;
}

const std::vector<int>& supported_dims() {
  static const std::vector<int> dims = {2, 5, 10, 20, 40, 80};
  return dims;
}

std::uint64_t problem_seed(const std::string& name, int dim) {
  return mix64(fnv1a(name) ^ (static_cast<std::uint64_t>(dim) * 0x9E3779B97F4A7C15ULL));
}

Mat suite_rotation(const std::string& name, int dim) {
  Rng rng(problem_seed(name, dim));
  return random_rotation(dim, rng);
}

GallagherFunction::GallagherFunction(int dim, int peaks, std::uint64_t seed) : dim_(dim) {
  if (dim < 1 || peaks < 2) throw ConfigError("GallagherFunction: need dim >= 1 and at least two peaks");
  Rng rng(seed);
  rotation_ = random_rotation(dim, rng);

  // Condition numbers: the global peak gets 1000, the others a shuffled
  // geometric ladder 1000^(2j/(peaks-2)).
  std::vector<double> alphas(peaks);
  alphas[0] = 1000.0;
  std::vector<double> ladder(peaks - 1);
  for (int j = 0; j < peaks - 1; ++j) {
    const double e = peaks > 2 ? 2.0 * j / (peaks - 2) : 0.0;
    ladder[j] = std::pow(1000.0, e);
  }
  for (int j = peaks - 2; j > 0; --j) std::swap(ladder[j], ladder[rng.below(j + 1)]);
  std::copy(ladder.begin(), ladder.end(), alphas.begin() + 1);

  weights_.resize(peaks);
  weights_[0] = 10.0;
  for (int i = 1; i < peaks; ++i) weights_[i] = 1.1 + 8.0 * (i - 1) / std::max(1, peaks - 2);

  for (int i = 0; i < peaks; ++i) {
    const double bound = i == 0 ? 4.0 : 4.9;
    Vec y(dim);
    for (int k = 0; k < dim; ++k) y[k] = rng.uniform(-bound, bound);
    centers_.push_back(y);
    rotated_centers_.push_back(rotation_ * y);

    Vec diag(dim);
    for (int k = 0; k < dim; ++k) {
      const double e = dim > 1 ? 0.5 * k / (dim - 1) : 0.0;
      diag[k] = std::pow(alphas[i], e) / std::pow(alphas[i], 0.25);
    }
    for (int k = dim - 1; k > 0; --k) std::swap(diag[k], diag[rng.below(k + 1)]);
    conditioning_.push_back(diag);
  }
}

Vec GallagherFunction::peak_values(const Vec& x) const {
  const Vec z = rotation_ * x;
  const double inv = 1.0 / (2.0 * dim_);
  Vec out(weights_.size());
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    const Vec d = z - rotated_centers_[i];
    const double q = (d.array().square() * conditioning_[i].array()).sum();
    out[static_cast<Eigen::Index>(i)] = weights_[i] * std::exp(-inv * q);
  }
  return out;
}

double GallagherFunction::operator()(const Vec& x) const {
  const double top = peak_values(x).maxCoeff();
  const double gap = 10.0 - top;
  return gap * gap;
}

int GallagherFunction::dominant_peak(const Vec& x) const {
  Eigen::Index idx = 0;
  peak_values(x).maxCoeff(&idx);
  return static_cast<int>(idx);
}

Problem make_problem(const std::string& name, int dim) {
  if (dim < 2) throw ConfigError("make_problem: suite functions need dim >= 2");
  const Vec lower = Vec::Constant(dim, -kDomainHalfWidth);
  const Vec upper = Vec::Constant(dim, kDomainHalfWidth);
  const KnownOptimum at_origin{Vec::Zero(dim), 0.0};

  if (name == "sphere") return Problem(name, dim, lower, upper, sphere, at_origin);
  if (name == "ellipsoid") {
    Mat r = suite_rotation(name, dim);
    Vec c = ellipsoid_coefficients(dim);
    return Problem(name, dim, lower, upper,
                   [r = std::move(r), c = std::move(c)](const Vec& x) {
                     const Vec z = r * x;
                     return (z.array().square() * c.array()).sum();
                   },
                   at_origin);
  }
  if (name == "rosenbrock") return Problem(name, dim, lower, upper, rosenbrock, KnownOptimum{Vec::Ones(dim), 0.0});
  if (name == "rastrigin") {
    Mat r = suite_rotation(name, dim);
    return Problem(name, dim, lower, upper, [r = std::move(r)](const Vec& x) { return rastrigin_raw(r * x); },
                   at_origin);
  }
  if (name == "ackley") return Problem(name, dim, lower, upper, ackley, at_origin);
  if (name == "schaffer") return Problem(name, dim, lower, upper, schaffer, at_origin);
  if (name == "gallagher") {
    auto g = std::make_shared<const GallagherFunction>(dim, 101, problem_seed(name, dim));
    KnownOptimum opt{g->global_optimum(), 0.0};
    return Problem(name, dim, lower, upper, [g](const Vec& x) { return (*g)(x); }, opt);
  }
  throw ConfigError("make_problem: unknown function '" + name + "'");
}

double empirical_y_max(const Problem& p, int samples) {
  Rng rng(problem_seed(p.name(), p.dim()) ^ kYMaxStream);
  double best = -std::numeric_limits<double>::infinity();
  Vec x(p.dim());
  for (int s = 0; s < samples; ++s) {
    for (int k = 0; k < p.dim(); ++k) x[k] = rng.uniform(p.lower()[k], p.upper()[k]);
    best = std::max(best, p.evaluate(x));
  }
  return best;
}

nlohmann::json suite_manifest(const std::vector<Problem>& problems) {
  nlohmann::json rows = nlohmann::json::array();
  for (const Problem& p : problems) {
    nlohmann::json row;
    row["name"] = p.name();
    row["dim"] = p.dim();
    row["lower"] = std::vector<double>(p.lower().data(), p.lower().data() + p.dim());
    row["upper"] = std::vector<double>(p.upper().data(), p.upper().data() + p.dim());
    if (p.range()) {
      row["y_min"] = p.range()->y_min;
      row["y_max"] = p.range()->y_max;
    }
    rows.push_back(std::move(row));
  }
  return nlohmann::json{{"problems", rows}};
}

std::vector<Problem> make_suite(const std::vector<int>& dims, const std::optional<std::filesystem::path>& cache) {
  for (int d : dims) {
    const auto& ok = supported_dims();
    if (std::find(ok.begin(), ok.end(), d) == ok.end())
      throw ConfigError("make_suite: unsupported dimension " + std::to_string(d));
  }

  std::map<std::string, double> cached;
  if (cache && std::filesystem::exists(*cache)) {
    std::ifstream in(*cache);
    try {
      const auto j = nlohmann::json::parse(in);
      for (const auto& row : j.at("problems"))
        if (row.contains("y_max")) cached[row.at("name").get<std::string>() + "_d" + std::to_string(row.at("dim").get<int>())] = row.at("y_max").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError("make_suite: corrupt manifest cache " + cache->string() + ": " + e.what());
    }
  }

  std::vector<Problem> out;
  bool computed = false;
  for (int d : dims) {
    for (const std::string& name : suite_function_names()) {
      Problem p = make_problem(name, d);
      double y_max;
      if (auto it = cached.find(p.id()); it != cached.end()) {
        y_max = it->second;
      } else {
        y_max = empirical_y_max(p);
        computed = true;
      }
      out.push_back(p.with_range(ValueRange{p.known_optimum()->f, y_max}));
    }
  }

  if (cache && computed) {
    std::filesystem::create_directories(cache->parent_path().empty() ? "." : cache->parent_path());
    const auto tmp = cache->string() + ".tmp";
    {
      std::ofstream os(tmp);
      if (!os) throw IoError("make_suite: cannot write manifest cache " + cache->string());
      os << suite_manifest(out).dump(2) << '\n';
    }
    std::filesystem::rename(tmp, *cache);
  }
  return out;
}

NormalizedScore normalized_value(double y, double y_min, double y_max) {
  if (!(y_max > y_min)) throw DomainError("normalized_value: y_max must exceed y_min");
  const double v = (y - y_min) / (y_max - y_min);
  return NormalizedScore{std::clamp(v, 0.0, 1.0)};
}

BudgetMeter::BudgetMeter(long total) : total_(total) {
  if (total < 0) throw ConfigError("BudgetMeter: negative budget");
}

void BudgetMeter::charge() {
  if (used_ >= total_) throw BudgetExhausted();
  ++used_;
}

MeteredObjective::MeteredObjective(const Problem& problem, long budget)
    : problem_(&problem), meter_(budget), best_f_(std::numeric_limits<double>::infinity()) {}

double MeteredObjective::operator()(const Vec& x) {
  meter_.charge();
  const double y = problem_->evaluate(x);
  if (std::isfinite(y) && (y < best_f_ || !has_best())) {
    best_f_ = y;
    best_x_ = x;
    improvements_.emplace_back(meter_.used(), y);
    if (!first_solved_ && problem_->range() &&
        normalized_value(y, problem_->range()->y_min, problem_->range()->y_max).solved()) {
      first_solved_ = meter_.used();
    }
  }
  return y;
}

double MeteredObjective::best_normalized() const {
  if (!has_best()) return std::numeric_limits<double>::quiet_NaN();
  return normalized(best_f_);
}

double MeteredObjective::normalized(double y) const {
  if (!problem_->range() || !std::isfinite(y)) return std::numeric_limits<double>::quiet_NaN();
  return normalized_value(y, problem_->range()->y_min, problem_->range()->y_max).value;
}

double evaluate_metered(const Problem& p, BudgetMeter& meter, const Vec& x) {
  meter.charge();
  return p.evaluate(x);
}

}  // namespace evograd
