// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
//
//   acceptance [--cache <manifest.json>] [--work <dir>] [--only 1,2,...]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "evograd/bench.hpp"
#include "evograd/evo.hpp"
#include "evograd/objectives.hpp"
#include "evograd/optimizer.hpp"
#include "evograd/run_record.hpp"
#include "evograd/surrogate.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace evograd;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  std::optional<fs::path> cache;
  fs::path work;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

const LossVariant kVariants[] = {LossVariant::egl, LossVariant::evograd, LossVariant::hgrad, LossVariant::evograd2};

std::vector<TaylorPair> random_batch(int n, int size, Rng& r) {
  std::vector<TaylorPair> batch;
  for (int b = 0; b < size; ++b) {
    TaylorPair p;
    p.anchor = r.normal_vec(n);
    p.probe = p.anchor + sample_ball(Vec::Zero(n), r.uniform(0.05, 1.0), r);
    p.y_anchor = r.normal();
    p.y_probe = r.normal();
    p.weight = r.uniform(0.01, 1.0);
    batch.push_back(std::move(p));
  }
  return batch;
}

GradNet random_net(int n, Rng& r) {
  std::vector<int> sizes{n};
  const int hidden = static_cast<int>(r.below(3));
  for (int h = 0; h < hidden; ++h) sizes.push_back(2 + static_cast<int>(r.below(5)));
  sizes.push_back(n);
  return GradNet(sizes, r);
}

double rel(const Vec& a, const Vec& b) { return (a - b).norm() / std::max(b.norm(), 1e-8); }

// 1. Parameter gradients and the Jacobian against central differences.
Outcome gradient_oracle(const Context&) {
  Rng r(101);
  double worst_grad = 0.0, worst_jac = 0.0;
  int cases = 0;
  for (LossVariant v : kVariants) {
    for (bool attached : {true, false}) {
      LossConfig cfg;
      cfg.variant = v;
      cfg.jacobian_attached = attached;
      const bool frozen = has_hessian_term(v) && !attached;
      for (int c = 0; c < 100; ++c, ++cases) {
        const int n = 1 + static_cast<int>(r.below(4));
        const GradNet net = random_net(n, r);
        const auto batch = random_batch(n, 1 + static_cast<int>(r.below(16)), r);
        Vec grad;
        batch_loss_gradient(cfg, net, batch, grad);
        const auto loss_at = [&](const Vec& p) {
          GradNet q = net;
          q.params() = p;
          return frozen ? batch_loss_frozen_jacobian(cfg, q, net, batch) : batch_loss(cfg, q, batch);
        };
        worst_grad = std::max(worst_grad, rel(grad, oracle::central_gradient(loss_at, net.params(), 1e-6)));
        const Vec x = r.normal_vec(n);
        const Mat j = net.jacobian(x);
        const Mat fd = oracle::fd_jacobian(net, x, 1e-6);
        worst_jac = std::max(worst_jac, (j - fd).norm() / std::max(fd.norm(), 1e-8));
      }
    }
  }
  return {worst_grad <= 1e-4 && worst_jac <= 1e-4,
          std::to_string(cases) + " cases, worst relative error: parameter gradient " + fmt("%.2e", worst_grad) +
              ", jacobian " + fmt("%.2e", worst_jac) + " (tol 1e-4)"};
}

// Trains a fresh default network on pairs with a step-decay schedule.
GradNet train_local(LossVariant v, int dim, const std::vector<TaylorPair>& pairs, std::uint64_t init_seed,
                    int epochs) {
  const double lr = 3e-3;
  Rng init(init_seed);
  GradNet net(GradNet::default_layers(dim), init);
  LossConfig cfg;
  cfg.variant = v;
  cfg.learn_rate = lr;
  cfg.jacobian_attached = true;
  SurrogateTrainer trainer(cfg);
  for (int e = 0; e < epochs; ++e) {
    if (e == epochs / 2) trainer.set_learn_rate(lr / 3);
    if (e == 3 * epochs / 4) trainer.set_learn_rate(lr / 10);
    trainer.train_epoch(net, pairs, false);
  }
  return net;
}

// Pairs in the local frame x = x0 + eps z, z in the unit ball, values
// (f(x) - f(x0)) / eps so that the frame gradient equals grad f(x).
std::vector<TaylorPair> local_pairs(const std::function<double(const Vec&)>& f, const Vec& x0, double eps,
                                    const std::vector<Vec>& z, int n_pairs, Rng& r) {
  const double f0 = f(x0);
  std::vector<TaylorPair> pairs;
  for (const auto& ix : sample_pair_indices(z, 1.0, n_pairs, r)) {
    TaylorPair p;
    p.anchor = z[ix.anchor];
    p.probe = z[ix.probe];
    p.y_anchor = (f(x0 + eps * p.anchor) - f0) / eps;
    p.y_probe = (f(x0 + eps * p.probe) - f0) / eps;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

// 2. Error of the learned gradient against eps on a cubic.
Outcome eps_scaling(const Context&) {
  const auto f = [](const Vec& x) {
    return x[0] * x[0] + x[0] * x[1] + 2 * x[1] * x[1] + x[0] * x[0] * x[0] + x[0] * x[1] * x[1] -
           0.5 * x[1] * x[1] * x[1];
  };
  const auto grad = [](const Vec& x) {
    Vec g(2);
    g[0] = 2 * x[0] + x[1] + 3 * x[0] * x[0] + x[1] * x[1];
    g[1] = x[0] + 4 * x[1] + 2 * x[0] * x[1] - 1.5 * x[1] * x[1];
    return g;
  };
  const std::vector<double> epss{0.4, 0.2, 0.1, 0.05};
  std::map<LossVariant, std::vector<double>> slopes;
  for (int s = 0; s < 20; ++s) {
    for (LossVariant v : {LossVariant::egl, LossVariant::hgrad}) {
      std::vector<double> lx, ly;
      for (double eps : epss) {
        Rng r(1000 + s);
        const Vec x0 = 0.5 * r.normal_vec(2);
        std::vector<Vec> z;
        for (int i = 0; i < 200; ++i) z.push_back(sample_ball(Vec::Zero(2), 1.0, r));
        const auto pairs = local_pairs(f, x0, eps, z, 4000, r);
        const GradNet net = train_local(v, 2, pairs, 77 + s, 500);
        double se = 0.0;
        for (const auto& zz : z) se += (net.forward(zz) - grad(x0 + eps * zz)).squaredNorm();
        lx.push_back(std::log(eps));
        ly.push_back(0.5 * std::log(se / static_cast<double>(z.size())));
      }
      slopes[v].push_back(oracle::ols_slope(lx, ly));
    }
  }
  const double hgrad = oracle::median(slopes[LossVariant::hgrad]);
  const double egl = oracle::median(slopes[LossVariant::egl]);
  return {hgrad >= 1.6 && egl >= 0.7 && egl <= 1.3,
          "median slope over 20 seeds: HGrad " + fmt("%.3f", hgrad) + " (need >= 1.6), EGL " + fmt("%.3f", egl) +
              " (need [0.7, 1.3])"};
}

// 3. Gradient recovery on a random PD quadratic at eps = 1.
Outcome quadratic_exactness(const Context&) {
  const int n = 5;
  int hits = 0;
  double worst_hgrad = 0.0, min_egl = 1e300;
  for (int s = 0; s < 10; ++s) {
    Rng r(500 + s);
    Mat m(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) m(i, j) = r.normal();
    const Mat a = m * m.transpose() / n + 0.5 * Mat::Identity(n, n);
    const Vec b = r.normal_vec(n);
    const Vec x0 = r.normal_vec(n);
    const auto f = [&](const Vec& x) { return 0.5 * x.dot(a * x) + b.dot(x); };
    std::vector<Vec> z;
    for (int i = 0; i < 400; ++i) z.push_back(sample_ball(Vec::Zero(n), 1.0, r));
    const auto pairs = local_pairs(f, x0, 1.0, z, 8000, r);
    std::map<LossVariant, double> err;
    for (LossVariant v : {LossVariant::egl, LossVariant::hgrad}) {
      const GradNet net = train_local(v, n, pairs, 9 + s, 600);
      double se = 0.0, sg = 0.0;
      for (const auto& zz : z) {
        const Vec g = a * (x0 + zz) + b;
        se += (net.forward(zz) - g).squaredNorm();
        sg += g.squaredNorm();
      }
      err[v] = std::sqrt(se / sg);
    }
    if (err[LossVariant::hgrad] <= 1e-2 && err[LossVariant::egl] > 5e-2) ++hits;
    worst_hgrad = std::max(worst_hgrad, err[LossVariant::hgrad]);
    min_egl = std::min(min_egl, err[LossVariant::egl]);
  }
  return {hits >= 8, std::to_string(hits) + "/10 seeds with HGrad <= 1e-2 and EGL > 5e-2 (need 8); worst HGrad " +
                         fmt("%.2e", worst_hgrad) + ", best EGL " + fmt("%.2e", min_egl)};
}

// 4. EvoGrad2 reduces to HGrad under uniform weights and to EvoGrad without
// the Jacobian term.
Outcome reduction_identities(const Context&) {
  Rng r(404);
  double worst_uniform = 0.0, worst_zero = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const int n = 1 + static_cast<int>(r.below(5));
    const GradNet net = random_net(n, r);
    auto batch = random_batch(n, 1 + static_cast<int>(r.below(64)), r);
    LossConfig e2, h, e;
    e2.variant = LossVariant::evograd2;
    h.variant = LossVariant::hgrad;
    e.variant = LossVariant::evograd;

    auto uniform = batch;
    for (auto& p : uniform) p.weight = 1.0 / static_cast<double>(uniform.size());
    const double lu = batch_loss(e2, net, uniform);
    worst_uniform = std::max(worst_uniform, std::abs(lu - batch_loss(h, net, uniform)) / std::max(1.0, std::abs(lu)));

    // A network with constant output has a zero Jacobian everywhere.
    GradNet flat = net;
    flat.weight(0).setZero();
    const double lz = batch_loss_frozen_jacobian(e2, net, flat, batch);
    worst_zero = std::max(worst_zero, std::abs(lz - batch_loss(e, net, batch)) / std::max(1.0, std::abs(lz)));
  }
  return {worst_uniform <= 1e-12 && worst_zero <= 1e-12,
          "1000 batches, worst difference: uniform weights vs HGrad " + fmt("%.1e", worst_uniform) +
              ", zero Jacobian vs EvoGrad " + fmt("%.1e", worst_zero) + " (tol 1e-12)"};
}

// 5. Floor, sum and softmax rank monotonicity of emitted weights.
Outcome weight_contract(const Context&) {
  Rng r(505);
  int floor_violations = 0, sum_violations = 0, rank_violations = 0, batches = 0;
  for (int t = 0; t < 10000; ++t, ++batches) {
    const int n = 1 + static_cast<int>(r.below(6));
    const auto b = static_cast<std::size_t>(1 + r.below(128));
    CmaState s = CmaState::initial(r.normal_vec(n), std::exp(r.uniform(-8.0, 2.0)));
    Mat q(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) q(i, j) = r.normal();
    s.cov = q * q.transpose() + 1e-3 * Mat::Identity(n, n);
    std::vector<Vec> pts;
    std::vector<double> fit;
    for (std::size_t i = 0; i < b; ++i) {
      pts.push_back(s.mean + std::exp(r.uniform(-3.0, 2.0)) * r.normal_vec(n));
      fit.push_back(std::exp(4.0 * r.normal()) * (r.uniform() < 0.5 ? -1.0 : 1.0));
    }
    const WeightSource src = t % 3 == 0 ? WeightSource::cma_gaussian
                             : t % 3 == 1 ? WeightSource::softmax
                                          : WeightSource::uniform;
    const auto w = weights_for({src, std::exp(r.uniform(-5.0, 2.0)), &s}, pts, fit).weights;
    double sum = 0.0;
    for (double x : w) {
      if (!(x >= weight_floor(b))) ++floor_violations;
      sum += x;
    }
    if (!(sum <= 1.0 + 1e-12)) ++sum_violations;
    if (src == WeightSource::softmax)
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < b; ++j)
          if (fit[i] <= fit[j] && w[i] < w[j]) ++rank_violations;
  }
  return {floor_violations == 0 && sum_violations == 0 && rank_violations == 0,
          std::to_string(batches) + " batches: " + std::to_string(floor_violations) + " below floor, " +
              std::to_string(sum_violations) + " sums above 1, " + std::to_string(rank_violations) +
              " softmax rank inversions"};
}

// Shared state for criteria 6 and 10.
struct DeskRun {
  bool done = false;
  SuiteResult result;
  double seconds = 0.0;
};

const std::vector<std::string> kDeskAlgorithms{"CMA", "CMA-TR", "EvoGrad2", "EGL"};

SuiteSpec desk_subset(const std::vector<std::uint64_t>& seeds) {
  SuiteSpec spec = SuiteSpec::desk();
  spec.algorithms.clear();
  for (const auto& a : kDeskAlgorithms) spec.algorithms.push_back(AlgorithmSpec::preset(a));
  spec.seeds = seeds;
  return spec;
}

DeskRun& desk_run(const Context& ctx) {
  static DeskRun run;
  if (run.done) return run;
  const fs::path dir = ctx.work / "desk";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunOptions opt;
  opt.out_dir = dir;
  opt.resume = false;
  opt.suite_cache = ctx.cache;
  const auto t0 = std::chrono::steady_clock::now();
  run.result = run_suite(desk_subset({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}), opt);
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run.done = true;
  return run;
}

// 6. Solved-fraction ordering on the desk suite at dims 10 and 20.
Outcome desk_ordering(const Context& ctx) {
  const DeskRun& run = desk_run(ctx);
  if (!run.result.failures.empty())
    return {false, std::to_string(run.result.failures.size()) + " cells failed: " + run.result.failures[0].message};
  std::vector<RunRecord> big;
  for (const auto& rec : run.result.records)
    if (rec.dim == 10 || rec.dim == 20) big.push_back(rec);
  const MetricsTable table = aggregate(big);
  std::map<std::string, double> frac;
  std::string detail;
  for (const auto& a : kDeskAlgorithms) {
    const MetricsRow* row = table.find(a);
    frac[a] = row ? row->solved_fraction : 0.0;
    detail += a + " " + fmt("%.3f", frac[a]) + (row ? " (" + std::to_string(row->cells) + " cells)" : "") + ", ";
  }
  detail += "desk run " + fmt("%.0f", run.seconds) + "s";
  return {frac["CMA-TR"] >= frac["CMA"] && frac["EvoGrad2"] >= frac["EGL"], "solved fraction at dims {10, 20}: " + detail};
}

// 7. Global-basin hits on the 2-D Gallagher function.
constexpr long kGallagherBudget = 1000;

Outcome gallagher_escape(const Context& ctx) {
  const auto suite = make_suite({2}, ctx.cache);
  const auto it = std::find_if(suite.begin(), suite.end(), [](const Problem& p) { return p.name() == "gallagher"; });
  const GallagherFunction g(2, 101, problem_seed("gallagher", 2));
  std::map<std::string, int> hits;
  for (const std::string alg : {"EvoGrad", "EGL"}) {
    const AlgorithmSpec spec = AlgorithmSpec::preset(alg);
    for (std::uint64_t s = 0; s < 50; ++s)
      if (g.dominant_peak(run_cell(*it, spec, s, kGallagherBudget).x_best) == 0) ++hits[alg];
  }
  return {hits["EvoGrad"] > hits["EGL"], "global basin reached over 50 starts at " +
                                             std::to_string(kGallagherBudget) + " evaluations: EvoGrad " +
                                             std::to_string(hits["EvoGrad"]) + ", EGL " + std::to_string(hits["EGL"])};
}

// 8. EvoGrad2 defaults on sphere, ellipsoid and Rosenbrock at dim 10.
Outcome convergence(const Context& ctx) {
  const auto suite = make_suite({10}, ctx.cache);
  const auto find = [&](const std::string& name) {
    return *std::find_if(suite.begin(), suite.end(), [&](const Problem& p) { return p.name() == name; });
  };
  AlgorithmSpec spec = AlgorithmSpec::preset("EvoGrad2");
  spec.optimizer.stop_below = kSolvedThreshold;
  struct Target {
    std::string name;
    long budget;
    int need;
  };
  bool pass = true;
  std::string detail;
  for (const Target& t : {Target{"sphere", 50000, 10}, Target{"ellipsoid", 50000, 10}, Target{"rosenbrock", 150000, 8}}) {
    const Problem p = find(t.name);
    int solved = 0;
    long worst = 0;
    for (std::uint64_t s = 0; s < 10; ++s) {
      const RunRecord rec = run_cell(p, spec, s, t.budget);
      if (rec.solved()) {
        ++solved;
        worst = std::max(worst, rec.first_solved_evals.value_or(rec.evals_used));
      }
    }
    pass = pass && solved >= t.need;
    detail += t.name + " " + std::to_string(solved) + "/10 (need " + std::to_string(t.need) + ", slowest " +
              std::to_string(worst) + " evals); ";
  }
  detail.resize(detail.size() - 2);
  return {pass, detail};
}

// 9. Pinned adaptive sizes.
Outcome sizes(const Context&) {
  struct Row {
    int dim, ns, np;
  };
  bool pass = true;
  std::string detail;
  for (const Row& row : {Row{40, 56, 14000}, Row{1, 8, 2000}, Row{100, 80, 20000}}) {
    const AdaptiveSizes s = adaptive_sizes(row.dim);
    pass = pass && s.n_samples == row.ns && s.n_pairs == row.np;
    detail += "N=" + std::to_string(row.dim) + " -> (" + std::to_string(s.n_samples) + ", " +
              std::to_string(s.n_pairs) + ") ";
  }
  return {pass, detail};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 10. Budget exactness over the desk run and byte-identical reruns.
Outcome determinism(const Context& ctx) {
  const DeskRun& run = desk_run(ctx);
  std::size_t over = 0;
  for (const auto& rec : run.result.records)
    if (rec.evals_used > rec.budget) ++over;

  const std::vector<std::uint64_t> rerun_seeds{0, 9};
  const fs::path dir = ctx.work / "rerun";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunOptions opt;
  opt.out_dir = dir;
  opt.resume = false;
  opt.suite_cache = ctx.cache;
  const SuiteResult again = run_suite(desk_subset(rerun_seeds), opt);
  std::size_t compared = 0, mismatched = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const fs::path first = ctx.work / "desk" / entry.path().filename();
    ++compared;
    if (!fs::exists(first) || slurp(first) != slurp(entry.path())) ++mismatched;
  }
  return {over == 0 && mismatched == 0 && compared > 0 && again.failures.empty(),
          std::to_string(run.result.records.size()) + " desk records, " + std::to_string(over) +
              " over budget; " + std::to_string(compared) + " reruns, " + std::to_string(mismatched) +
              " not byte-identical"};
}

}  // namespace

int main(int argc, char** argv) {
  Context ctx;
  ctx.work = fs::temp_directory_path() / "evograd_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--cache" && i + 1 < argc) {
      ctx.cache = argv[++i];
    } else if (arg == "--work" && i + 1 < argc) {
      ctx.work = argv[++i];
    } else if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::fprintf(stderr, "usage: %s [--cache <manifest.json>] [--work <dir>] [--only 1,2,...]\n", argv[0]);
      return 2;
    }
  }
  fs::create_directories(ctx.work);

  const std::vector<std::pair<std::string, std::function<Outcome(const Context&)>>> criteria{
      {"gradient oracle", gradient_oracle},
      {"eps scaling", eps_scaling},
      {"quadratic exactness", quadratic_exactness},
      {"variant reduction", reduction_identities},
      {"weight map contract", weight_contract},
      {"desk ordering", desk_ordering},
      {"multi-minima escape", gallagher_escape},
      {"end-to-end convergence", convergence},
      {"adaptive sizes", sizes},
      {"determinism and budget", determinism},
  };

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failed;
    std::printf("%s criterion %d %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
