#include "evograd/evo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "evograd/error.hpp"

namespace evograd {

// ---------------------------------------------------------------------------
// Parameters and state

int CmaParams::default_lambda(int dim) {
  return 4 + static_cast<int>(std::floor(3.0 * std::log(static_cast<double>(dim))));
}

std::vector<double> CmaParams::recombination_weights(int mu) {
  if (mu < 1) throw ConfigError("recombination weights: mu must be positive");
  std::vector<double> w(static_cast<std::size_t>(mu));
  for (int i = 0; i < mu; ++i) w[static_cast<std::size_t>(i)] = std::log(mu + 0.5) - std::log(i + 1.0);
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= sum;
  return w;
}

CmaParams CmaParams::defaults(int dim, int lambda) {
  if (dim < 1) throw ConfigError("CMA: dimension must be positive");
  if (lambda <= 0) lambda = default_lambda(dim);
  if (lambda < 2) throw ConfigError("CMA: lambda must be at least 2");
  CmaParams p;
  p.dim = dim;
  p.lambda = lambda;
  p.mu = lambda / 2;
  p.weights = recombination_weights(p.mu);
  double sq = 0.0;
  for (double w : p.weights) sq += w * w;
  p.mu_eff = 1.0 / sq;
  const double n = dim;
  p.c_sigma = (p.mu_eff + 2.0) / (n + p.mu_eff + 5.0);
  p.d_sigma = 1.0 + 2.0 * std::max(0.0, std::sqrt((p.mu_eff - 1.0) / (n + 1.0)) - 1.0) + p.c_sigma;
  p.c_c = (4.0 + p.mu_eff / n) / (n + 4.0 + 2.0 * p.mu_eff / n);
  p.c_1 = 2.0 / ((n + 1.3) * (n + 1.3) + p.mu_eff);
  p.c_mu = std::min(1.0 - p.c_1, 2.0 * (p.mu_eff - 2.0 + 1.0 / p.mu_eff) / ((n + 2.0) * (n + 2.0) + p.mu_eff));
  return p;
}

CmaState CmaState::initial(const Vec& mean, double sigma, int lambda) {
  if (!(sigma > 0.0)) throw ConfigError("CMA: sigma must be positive");
  CmaState s;
  const auto n = mean.size();
  s.mean = mean;
  s.sigma = sigma;
  s.cov = Mat::Identity(n, n);
  s.p_sigma = Vec::Zero(n);
  s.p_c = Vec::Zero(n);
  s.params = CmaParams::defaults(static_cast<int>(n), lambda);
  return s;
}

// ---------------------------------------------------------------------------
// Sampling and update

std::vector<Vec> cma_sample(CmaState& state, int lambda, Rng& rng) {
  if (lambda < 2) throw DomainError("cma_sample: lambda must be at least 2");
  Mat l;
  try {
    l = cholesky(state.cov);
  } catch (const DecompositionError&) {
    state.cov = repair_covariance(state.cov);
    l = cholesky(state.cov);
  }
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(lambda));
  for (int k = 0; k < lambda; ++k) out.push_back(state.mean + state.sigma * (l * rng.normal_vec(state.mean.size())));
  return out;
}

namespace {

double expected_norm(int n) {
  const double d = n;
  return std::sqrt(d) * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d * d));
}

Eigen::SelfAdjointEigenSolver<Mat> eigen_of(const Mat& c) {
  Eigen::SelfAdjointEigenSolver<Mat> es(c);
  if (es.info() != Eigen::Success) throw DecompositionError("CMA: eigen decomposition failed");
  return es;
}

}  // namespace

CmaState cma_update(const CmaState& state, std::span<const Candidate> population) {
  std::vector<const Candidate*> pop;
  for (const auto& c : population)
    if (std::isfinite(c.f) && c.x.size() == state.mean.size() && c.x.allFinite()) pop.push_back(&c);
  if (pop.size() < 2) return state;
  std::stable_sort(pop.begin(), pop.end(), [](const Candidate* a, const Candidate* b) { return a->f < b->f; });

  const CmaParams& p = state.params;
  std::vector<double> weights = p.weights;
  double mu_eff = p.mu_eff;
  if (static_cast<int>(pop.size()) < p.mu) {
    weights = CmaParams::recombination_weights(static_cast<int>(pop.size()) / 2);
    double sq = 0.0;
    for (double w : weights) sq += w * w;
    mu_eff = 1.0 / sq;
  }
  const int mu = static_cast<int>(weights.size());
  const auto n = state.mean.size();

  CmaState next = state;
  Mat ys(n, mu);
  for (int i = 0; i < mu; ++i) ys.col(i) = (pop[static_cast<std::size_t>(i)]->x - state.mean) / state.sigma;
  const Eigen::Map<const Vec> w(weights.data(), mu);
  const Vec y_w = ys * w;
  next.mean = state.mean + state.sigma * y_w;

  Mat cov = state.cov;
  Eigen::SelfAdjointEigenSolver<Mat> es;
  try {
    es = eigen_of(cov);
  } catch (const DecompositionError&) {
    cov = repair_covariance(cov);
    es = eigen_of(cov);
  }
  if (es.eigenvalues().minCoeff() <= 0.0) {
    cov = repair_covariance(cov);
    es = eigen_of(cov);
  }
  const Mat inv_sqrt = es.eigenvectors() * es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                       es.eigenvectors().transpose();

  const double cs = p.c_sigma;
  next.p_sigma = (1.0 - cs) * state.p_sigma + std::sqrt(cs * (2.0 - cs) * mu_eff) * (inv_sqrt * y_w);
  const double gen = state.generation + 1;
  const double chi = expected_norm(static_cast<int>(n));
  const double ps_norm = next.p_sigma.norm();
  const bool h_sigma =
      ps_norm / std::sqrt(1.0 - std::pow(1.0 - cs, 2.0 * gen)) < (1.4 + 2.0 / (static_cast<double>(n) + 1.0)) * chi;

  const double cc = p.c_c;
  next.p_c = (1.0 - cc) * state.p_c;
  if (h_sigma) next.p_c += std::sqrt(cc * (2.0 - cc) * mu_eff) * y_w;

  const double c1 = p.c_1;
  const double cmu = p.c_mu;
  const double delta_h = h_sigma ? 0.0 : c1 * cc * (2.0 - cc);
  if (c1 == 0.0 && cmu == 0.0) {
    next.cov = state.cov;
  } else {
    const Mat rank_mu = ys * w.asDiagonal() * ys.transpose();
    next.cov = (1.0 - c1 - cmu + delta_h) * cov + c1 * (next.p_c * next.p_c.transpose()) + cmu * rank_mu;
    next.cov = 0.5 * (next.cov + next.cov.transpose());
  }

  const double exponent = std::min(1.0, (cs / p.d_sigma) * (ps_norm / chi - 1.0));
  next.sigma = state.sigma * std::exp(exponent);
  next.generation = state.generation + 1;
  if (!next.cov.allFinite()) throw DecompositionError("CMA: covariance became non-finite");
  return next;
}

double cma_condition(const CmaState& state) {
  const auto ev = eigen_of(state.cov).eigenvalues();
  const double lo = ev.minCoeff();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return ev.maxCoeff() / lo;
}

double cma_spread(const CmaState& state) {
  return state.sigma * std::sqrt(std::max(0.0, eigen_of(state.cov).eigenvalues().maxCoeff()));
}

// ---------------------------------------------------------------------------
// Weight map

std::string_view to_string(WeightSource s) {
  switch (s) {
    case WeightSource::uniform: return "uniform";
    case WeightSource::cma_gaussian: return "cma_gaussian";
    case WeightSource::softmax: return "softmax";
  }
  return "?";
}

WeightSource weight_source_from_string(std::string_view name) {
  if (name == "uniform") return WeightSource::uniform;
  if (name == "cma_gaussian") return WeightSource::cma_gaussian;
  if (name == "softmax") return WeightSource::softmax;
  throw ConfigError("unknown weight source '" + std::string(name) + "'");
}

double weight_floor(std::size_t batch_size) { return 1.0 / (10.0 * static_cast<double>(batch_size)); }

std::vector<double> floored_softmax(std::span<const double> logits) {
  const std::size_t b = logits.size();
  std::vector<double> w(b);
  if (b == 0) return w;
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    w[i] = std::exp(logits[i] - top);
    sum += w[i];
  }
  const double floor = weight_floor(b);
  const double mass = 1.0 - static_cast<double>(b) * floor;
  for (double& x : w) x = floor + mass * (x / sum);
  return w;
}

WeightBatch weights_for(const WeightMap& map, std::span<const Vec> points, std::span<const double> fitness) {
  const std::size_t b = points.size();
  if (b == 0) throw DomainError("weights_for: empty batch");
  WeightBatch out;
  switch (map.source) {
    case WeightSource::uniform:
      out.weights.assign(b, 1.0 / static_cast<double>(b));
      return out;
    case WeightSource::softmax: {
      if (fitness.size() != b) throw DomainError("weights_for: fitness count does not match batch");
      if (!(map.temperature > 0.0)) throw ConfigError("weights_for: temperature must be positive");
      std::vector<double> logits(b);
      for (std::size_t i = 0; i < b; ++i) logits[i] = -fitness[i] / map.temperature;
      out.weights = floored_softmax(logits);
      return out;
    }
    case WeightSource::cma_gaussian: {
      if (!map.cma) throw ConfigError("weights_for: gaussian source needs a CMA state");
      std::vector<double> logits(b);
      try {
        const Mat l = cholesky(map.cma->cov);
        for (std::size_t i = 0; i < b; ++i)
          logits[i] = gaussian_log_density_chol(points[i], map.cma->mean, map.cma->sigma, l);
        if (!std::all_of(logits.begin(), logits.end(), [](double v) { return std::isfinite(v); }))
          throw DecompositionError("non-finite density");
      } catch (const DecompositionError&) {
        out.weights.assign(b, 1.0 / static_cast<double>(b));
        out.fell_back = true;
        return out;
      }
      out.weights = floored_softmax(logits);
      return out;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CMA inside a trust region

nlohmann::json CmaRunConfig::to_json() const {
  return {{"budget", budget},
          {"map_kind", to_string(map_kind)},
          {"gamma", gamma},
          {"sigma0", sigma0},
          {"lambda", lambda},
          {"restart_on_stop", restart_on_stop},
          {"max_condition", max_condition},
          {"min_spread", min_spread},
          {"stall_factor", stall_factor}};
}

RunRecord cma_tr_run(const Problem& problem, const CmaRunConfig& cfg, Rng& rng, const std::optional<Vec>& start) {
  if (cfg.budget <= 0) throw ConfigError("cma_tr_run: budget must be positive");
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) throw ConfigError("cma_tr_run: gamma must be in (0, 1]");

  RunRecord rec;
  rec.algorithm = cfg.restart_on_stop ? "CMA-TR" : "CMA";
  rec.config_hash = fnv1a_hex(cfg.to_json().dump());
  rec.seed = rng.seed();

  MeteredObjective obj(problem, cfg.budget);
  TrustRegion tr = TrustRegion::covering(problem.lower(), problem.upper(), cfg.map_kind);
  const Vec u0 = start ? tr.from_search(*start) : Vec(Vec::Zero(problem.dim()));
  CmaState state = CmaState::initial(u0, cfg.sigma0, cfg.lambda);
  const int lambda = state.params.lambda;

  double best_since_restart = std::numeric_limits<double>::infinity();
  long stall = 0;
  try {
    for (;;) {
      std::vector<Vec> us;
      try {
        us = cma_sample(state, lambda, rng);
      } catch (const DecompositionError&) {
        rec.notes.push_back("covariance reset at evaluation " + std::to_string(obj.used()));
        state = CmaState::initial(state.mean, cfg.sigma0, cfg.lambda);
        continue;
      }
      std::vector<Candidate> pop;
      pop.reserve(us.size());
      Vec pop_best_x;
      double pop_best_f = std::numeric_limits<double>::infinity();
      for (auto& u : us) {
        const Vec x = tr.to_search(u);
        const double f = obj(x);
        if (f < pop_best_f) {
          pop_best_f = f;
          pop_best_x = x;
        }
        pop.push_back({std::move(u), f});
      }
      record_progress(rec, obj);

      if (pop_best_f < best_since_restart) {
        best_since_restart = pop_best_f;
        stall = 0;
      } else {
        ++stall;
      }

      bool stop = false;
      try {
        state = cma_update(state, pop);
        stop = !(state.sigma > 0.0) || !std::isfinite(state.sigma) || cma_condition(state) > cfg.max_condition ||
               cma_spread(state) < cfg.min_spread;
      } catch (const DecompositionError&) {
        stop = true;
      }
      stop = stop || stall >= static_cast<long>(cfg.stall_factor) * lambda;
      if (!stop) continue;
      if (!cfg.restart_on_stop) break;
      if (pop_best_x.size() == 0) pop_best_x = tr.to_search(state.mean);

      tr = tr.shrink_to(pop_best_x, cfg.gamma);
      state = CmaState::initial(tr.from_search(pop_best_x), cfg.sigma0, cfg.lambda);
      best_since_restart = std::numeric_limits<double>::infinity();
      stall = 0;
      rec.events.push_back({tr.generation(), "restart", obj.used(), 0.0, 0.0, tr.center(), tr.scale()});
    }
  } catch (const BudgetExhausted&) {
  }
  finalize_record(rec, obj);
  return rec;
}

}  // namespace evograd
