#include "evograd/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "evograd/error.hpp"

namespace evograd {

// ---------------------------------------------------------------------------
// Enums

std::string_view to_string(StallRule r) {
  return r == StallRule::strict_worsening ? "strict_worsening" : "no_improvement";
}

StallRule stall_rule_from_string(std::string_view name) {
  if (name == "strict_worsening") return StallRule::strict_worsening;
  if (name == "no_improvement") return StallRule::no_improvement;
  throw ConfigError("unknown stall rule '" + std::string(name) + "'");
}

std::string_view to_string(NormalizerRefit r) { return r == NormalizerRefit::tr_event ? "tr_event" : "iteration"; }

NormalizerRefit normalizer_refit_from_string(std::string_view name) {
  if (name == "tr_event") return NormalizerRefit::tr_event;
  if (name == "iteration") return NormalizerRefit::iteration;
  throw ConfigError("unknown normalizer refit policy '" + std::string(name) + "'");
}

namespace {

std::string_view to_string(TrainAlgorithm a) { return a == TrainAlgorithm::adam ? "adam" : "sgd"; }

TrainAlgorithm train_algorithm_from_string(std::string_view name) {
  if (name == "adam") return TrainAlgorithm::adam;
  if (name == "sgd") return TrainAlgorithm::sgd;
  throw ConfigError("unknown training algorithm '" + std::string(name) + "'");
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void OptimizerConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("OptimizerConfig: ") + what);
  };
  require(eps0_coeff > 0.0, "eps0_coeff must be positive");
  require(eps_factor > 0.0 && eps_factor < 1.0, "eps_factor must lie in (0, 1)");
  require(eps_min > 0.0, "eps_min must be positive");
  require(tr_shrink > 0.0 && tr_shrink < 1.0, "tr_shrink must lie in (0, 1)");
  require(step_size > 0.0, "step_size must be positive");
  require(n_max >= 1, "n_max must be at least 1");
  require(budget >= 1, "budget must be positive");
  require(movement_coeff >= 0.0, "movement_coeff must be non-negative");
  require(outlier_quantile > 0.0 && outlier_quantile < 0.5, "outlier_quantile must lie in (0, 0.5)");
  require(softmax_temperature > 0.0, "softmax_temperature must be positive");
  require(learn_rate > 0.0, "learn_rate must be positive");
  require(batch_size >= 1, "batch_size must be positive");
  require(epochs_per_iteration >= 1, "epochs_per_iteration must be positive");
  require(n_samples == 0 || n_samples >= 2, "n_samples must be 0 (adaptive) or at least 2");
  require(n_pairs >= 0, "n_pairs must be non-negative");
  require(buffer_capacity >= 0, "buffer_capacity must be non-negative");
  for (int h : hidden_layers) require(h >= 1, "hidden layer sizes must be positive");
  if (stop_below) require(*stop_below > 0.0, "stop_below must be positive");
}

LossConfig OptimizerConfig::loss_config() const {
  return LossConfig{variant, jacobian_attached, batch_size, learn_rate, train_algorithm};
}

nlohmann::json OptimizerConfig::to_json() const {
  return {{"name", name},
          {"variant", to_string(variant)},
          {"jacobian_attached", jacobian_attached},
          {"weight_source", to_string(weight_source)},
          {"softmax_temperature", softmax_temperature},
          {"eps0_coeff", eps0_coeff},
          {"eps_factor", eps_factor},
          {"eps_min", eps_min},
          {"tr_shrink", tr_shrink},
          {"step_size", step_size},
          {"n_max", n_max},
          {"budget", budget},
          {"movement_coeff", movement_coeff},
          {"outlier_quantile", outlier_quantile},
          {"map_kind", to_string(map_kind)},
          {"hidden_layers", hidden_layers},
          {"learn_rate", learn_rate},
          {"batch_size", batch_size},
          {"train_algorithm", to_string(train_algorithm)},
          {"epochs_per_iteration", epochs_per_iteration},
          {"reset_net_on_tr", reset_net_on_tr},
          {"n_samples", n_samples},
          {"n_pairs", n_pairs},
          {"buffer_capacity", buffer_capacity},
          {"stall_rule", to_string(stall_rule)},
          {"normalizer_refit", to_string(normalizer_refit)},
          {"stop_below", stop_below ? nlohmann::json(*stop_below) : nlohmann::json(nullptr)}};
}

OptimizerConfig OptimizerConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("optimizer config must be a JSON object");
  OptimizerConfig c;
  if (j.contains("name")) {
    const auto name = j.at("name").get<std::string>();
    const auto& presets = preset_names();
    if (std::find(presets.begin(), presets.end(), name) != presets.end()) c = preset(name);
    c.name = name;
  }
  const nlohmann::json known = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) {
      std::string names;
      for (const auto& [k, v] : known.items()) names += (names.empty() ? "" : ", ") + k;
      throw ConfigError("unknown optimizer config field '" + key + "' (valid: " + names + ")");
    }
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("softmax_temperature", c.softmax_temperature);
    get("jacobian_attached", c.jacobian_attached);
    get("eps0_coeff", c.eps0_coeff);
    get("eps_factor", c.eps_factor);
    get("eps_min", c.eps_min);
    get("tr_shrink", c.tr_shrink);
    get("step_size", c.step_size);
    get("n_max", c.n_max);
    get("budget", c.budget);
    get("movement_coeff", c.movement_coeff);
    get("outlier_quantile", c.outlier_quantile);
    get("hidden_layers", c.hidden_layers);
    get("learn_rate", c.learn_rate);
    get("batch_size", c.batch_size);
    get("epochs_per_iteration", c.epochs_per_iteration);
    get("reset_net_on_tr", c.reset_net_on_tr);
    get("n_samples", c.n_samples);
    get("n_pairs", c.n_pairs);
    get("buffer_capacity", c.buffer_capacity);
    if (j.contains("variant")) c.variant = loss_variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("weight_source"))
      c.weight_source = weight_source_from_string(j.at("weight_source").get<std::string>());
    if (j.contains("map_kind")) c.map_kind = map_kind_from_string(j.at("map_kind").get<std::string>());
    if (j.contains("train_algorithm"))
      c.train_algorithm = train_algorithm_from_string(j.at("train_algorithm").get<std::string>());
    if (j.contains("stall_rule")) c.stall_rule = stall_rule_from_string(j.at("stall_rule").get<std::string>());
    if (j.contains("normalizer_refit"))
      c.normalizer_refit = normalizer_refit_from_string(j.at("normalizer_refit").get<std::string>());
    if (j.contains("stop_below")) {
      const auto& v = j.at("stop_below");
      c.stop_below = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed optimizer config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string OptimizerConfig::hash() const { return fnv1a_hex(to_json().dump()); }

const std::vector<std::string>& OptimizerConfig::preset_names() {
  static const std::vector<std::string> names = {"EvoGrad2", "EvoGrad", "EvoGrad-0.1", "HGrad", "HGrad-Attached", "EGL"};
  return names;
}

OptimizerConfig OptimizerConfig::preset(std::string_view name) {
  OptimizerConfig c;
  c.name = std::string(name);
  if (name == "EvoGrad2") return c;
  if (name == "EvoGrad") {
    c.variant = LossVariant::evograd;
    return c;
  }
  if (name == "EvoGrad-0.1") {
    c.variant = LossVariant::evograd;
    c.weight_source = WeightSource::softmax;
    c.softmax_temperature = 0.1;
    return c;
  }
  if (name == "HGrad" || name == "HGrad-Attached") {
    c.variant = LossVariant::hgrad;
    c.weight_source = WeightSource::uniform;
    c.jacobian_attached = name == "HGrad-Attached";
    return c;
  }
  if (name == "EGL") {
    c.variant = LossVariant::egl;
    c.weight_source = WeightSource::uniform;
    return c;
  }
  std::string names;
  for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
  throw ConfigError("unknown optimizer preset '" + std::string(name) + "' (valid: " + names + ")");
}

// ---------------------------------------------------------------------------
// Sizes

int ceil_sqrt(int n) {
  if (n < 1) throw DomainError("ceil_sqrt: argument must be positive");
  int s = static_cast<int>(std::sqrt(static_cast<double>(n)));
  while (static_cast<long>(s) * s < n) ++s;
  while (s > 1 && static_cast<long>(s - 1) * (s - 1) >= n) --s;
  return s;
}

AdaptiveSizes adaptive_sizes(int dim) {
  const int r = ceil_sqrt(dim);
  return {8 * r, 2000 * r};
}

long default_buffer_capacity(int dim) { return 20000L * ceil_sqrt(dim); }

// ---------------------------------------------------------------------------
// Replay buffer

ReplayBuffer::ReplayBuffer(long capacity) : capacity_(capacity) {
  if (capacity < 2) throw ConfigError("ReplayBuffer: capacity must be at least 2");
}

void ReplayBuffer::add(BufferEntry e) {
  entries_.push_back(std::move(e));
  while (static_cast<long>(entries_.size()) > capacity_) entries_.pop_front();
}

std::size_t ReplayBuffer::remap(const TrustRegion& tr) {
  std::deque<BufferEntry> kept;
  for (auto& e : entries_) {
    if (!tr.in_image(e.x)) continue;
    Vec u = tr.from_search(e.x);
    if (!u.allFinite()) continue;
    e.u = std::move(u);
    kept.push_back(std::move(e));
  }
  const std::size_t evicted = entries_.size() - kept.size();
  entries_ = std::move(kept);
  return evicted;
}

// ---------------------------------------------------------------------------
// Pair sampling

std::vector<IndexPair> sample_pair_indices(const std::vector<Vec>& points, double eps, int n_pairs, Rng& rng,
                                           long max_attempts) {
  std::vector<IndexPair> out;
  const std::size_t n = points.size();
  if (n < 2 || n_pairs <= 0 || !(eps >= 0.0)) return out;
  if (max_attempts <= 0) max_attempts = 20L * n_pairs + 1000;
  const double eps2 = eps * eps;

  // Small buffers: enumerate the admissible set and draw from it directly.
  if (static_cast<double>(n) * static_cast<double>(n - 1) <= 40.0 * n_pairs) {
    std::vector<IndexPair> admissible;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if ((points[i] - points[j]).squaredNorm() <= eps2) {
          admissible.push_back({i, j});
          admissible.push_back({j, i});
        }
    if (admissible.empty()) return out;
    out.reserve(static_cast<std::size_t>(n_pairs));
    for (int k = 0; k < n_pairs; ++k) out.push_back(admissible[rng.below(admissible.size())]);
    return out;
  }

  Vec dir = rng.normal_vec(points.front().size());
  const double norm = dir.norm();
  if (norm > 0.0) dir /= norm;
  std::vector<double> proj(n);
  for (std::size_t i = 0; i < n; ++i) proj[i] = dir.dot(points[i]);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return proj[a] < proj[b] || (proj[a] == proj[b] && a < b);
  });
  std::vector<double> s(n);
  for (std::size_t r = 0; r < n; ++r) s[r] = proj[order[r]];

  // Rank window [lo, hi) of points whose projection is within eps of rank r.
  std::vector<std::size_t> lo(n), hi(n);
  std::vector<std::uint64_t> cum(n);
  std::size_t a = 0, b = 0;
  std::uint64_t total = 0;
  for (std::size_t r = 0; r < n; ++r) {
    while (s[r] - s[a] > eps) ++a;
    if (b < r + 1) b = r + 1;
    while (b < n && s[b] - s[r] <= eps) ++b;
    lo[r] = a;
    hi[r] = b;
    total += hi[r] - lo[r] - 1;
    cum[r] = total;
  }
  if (total == 0) return out;

  out.reserve(static_cast<std::size_t>(n_pairs));
  for (long attempt = 0; attempt < max_attempts && static_cast<int>(out.size()) < n_pairs; ++attempt) {
    const std::uint64_t t = rng.below(total);
    const auto r = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), t) - cum.begin());
    std::size_t q = lo[r] + static_cast<std::size_t>(rng.below(hi[r] - lo[r] - 1));
    if (q >= r) ++q;
    const std::size_t i = order[r];
    const std::size_t j = order[q];
    if ((points[i] - points[j]).squaredNorm() <= eps2) out.push_back({i, j});
  }
  return out;
}

Vec descent_update(const GradNet& net, const Vec& u, double alpha) { return u - alpha * net.forward(u); }

// ---------------------------------------------------------------------------
// Optimizer

namespace {

std::vector<int> net_layers(int dim, const std::vector<int>& hidden) {
  std::vector<int> layers{dim};
  layers.insert(layers.end(), hidden.begin(), hidden.end());
  layers.push_back(dim);
  return layers;
}

OptimizerConfig validated(OptimizerConfig cfg) {
  cfg.validate();
  return cfg;
}

// tanh(15) differs from 1 by ~2e-13, so the mapped point stays strictly
// inside the image and remains invertible.
constexpr double kMaxTanhCoordinate = 15.0;

}  // namespace

EvoGradOptimizer::EvoGradOptimizer(const Problem& problem, OptimizerConfig cfg, std::uint64_t seed,
                                   const std::optional<Vec>& start)
    : cfg_(validated(std::move(cfg))),
      obj_(problem, cfg_.budget),
      explore_rng_(Rng(seed).split(1)),
      pair_rng_(Rng(seed).split(2)),
      init_rng_(Rng(seed).split(3)),
      n_samples_(cfg_.n_samples > 0 ? cfg_.n_samples : adaptive_sizes(problem.dim()).n_samples),
      n_pairs_(cfg_.n_pairs > 0 ? cfg_.n_pairs : adaptive_sizes(problem.dim()).n_pairs),
      tr_(TrustRegion::covering(problem.lower(), problem.upper(), cfg_.map_kind)),
      buffer_(cfg_.buffer_capacity > 0 ? cfg_.buffer_capacity : default_buffer_capacity(problem.dim())),
      net_(net_layers(problem.dim(), cfg_.hidden_layers), init_rng_),
      trainer_(cfg_.loss_config()),
      f_k_(std::numeric_limits<double>::infinity()),
      best_descent_f_(std::numeric_limits<double>::infinity()),
      eps0_(cfg_.eps0_coeff * std::sqrt(static_cast<double>(problem.dim()))),
      eps_(std::max(cfg_.eps_min, eps0_)) {
  const Vec x0 = start ? *start : problem.center();
  if (x0.size() != problem.dim()) throw DomainError("EvoGradOptimizer: start point has the wrong dimension");
  if (!tr_.in_image(x0)) throw DomainError("EvoGradOptimizer: start point lies outside the search domain interior");
  u_k_ = clamp_normalized(tr_.from_search(x0));
  reset_cma();
  rec_.algorithm = cfg_.name;
  rec_.config_hash = cfg_.hash();
  rec_.seed = seed;
}

Vec EvoGradOptimizer::clamp_normalized(Vec u) const {
  if (tr_.kind() == MapKind::tanh) u = u.cwiseMax(-kMaxTanhCoordinate).cwiseMin(kMaxTanhCoordinate);
  return u;
}

void EvoGradOptimizer::reset_cma() {
  const double sigma = std::max(eps_ / std::sqrt(static_cast<double>(u_k_.size())), 1e-12);
  cma_ = CmaState::initial(u_k_, sigma, std::max(2, n_samples_));
}

void EvoGradOptimizer::refit_normalizer() {
  if (buffer_.size() < 2) return;
  std::vector<double> ys;
  ys.reserve(buffer_.size());
  for (const auto& e : buffer_.entries()) ys.push_back(e.y);
  normalizer_ = ValueNormalizer::fit(ys, cfg_.outlier_quantile);
  normalizer_fitted_ = true;
}

double EvoGradOptimizer::evaluate(const Vec& u, Vec* x_out) {
  Vec x = tr_.to_search(u);
  const double y = obj_(x);
  Vec stored = tr_.kind() == MapKind::linear ? tr_.from_search(x) : u;
  buffer_.add({stored, x, y, tr_.generation()});
  if (x_out) *x_out = std::move(x);
  return y;
}

int EvoGradOptimizer::explore() {
  const long m = std::min<long>(n_samples_, obj_.remaining());
  if (m <= 0) throw BudgetExhausted();
  std::vector<Candidate> pop;
  pop.reserve(static_cast<std::size_t>(m));
  for (long i = 0; i < m; ++i) {
    const Vec u = clamp_normalized(sample_ball(u_k_, eps_, explore_rng_));
    const double y = evaluate(u, nullptr);
    pop.push_back({buffer_.entries().back().u, y});
  }
  if (!normalizer_fitted_) refit_normalizer();
  if (pop.size() >= 2) {
    try {
      cma_ = cma_update(cma_, pop);
    } catch (const DecompositionError&) {
      rec_.notes.push_back("CMA state reset after a failed update at evaluation " + std::to_string(obj_.used()));
      reset_cma();
    }
  }
  record_progress(rec_, obj_);
  return static_cast<int>(m);
}

std::vector<TaylorPair> EvoGradOptimizer::build_pairs() {
  std::vector<TaylorPair> pairs;
  if (buffer_.size() < 2) return pairs;
  std::vector<Vec> points;
  points.reserve(buffer_.size());
  for (const auto& e : buffer_.entries()) points.push_back(e.u);
  const auto idx = sample_pair_indices(points, eps_, n_pairs_, pair_rng_);
  pairs.reserve(idx.size());
  for (const auto& p : idx) {
    const auto& a = buffer_[p.anchor];
    const auto& b = buffer_[p.probe];
    pairs.push_back({a.u, b.u, normalizer_.normalize(a.y), normalizer_.normalize(b.y), 1.0});
  }

  const WeightMap map{cfg_.weight_source, cfg_.softmax_temperature, &cma_};
  const auto bs = static_cast<std::size_t>(cfg_.batch_size);
  std::vector<Vec> probes;
  std::vector<double> fitness;
  for (std::size_t start = 0; start < pairs.size(); start += bs) {
    const std::size_t end = std::min(pairs.size(), start + bs);
    probes.clear();
    fitness.clear();
    for (std::size_t k = start; k < end; ++k) {
      probes.push_back(pairs[k].probe);
      fitness.push_back(pairs[k].y_probe);
    }
    const WeightBatch w = weights_for(map, probes, fitness);
    if (w.fell_back) ++weight_fallbacks_;
    for (std::size_t k = start; k < end; ++k) pairs[k].weight = w.weights[k - start];
  }
  return pairs;
}

EpochResult EvoGradOptimizer::train(const std::vector<TaylorPair>& pairs) {
  EpochResult last;
  if (pairs.empty()) {
    ++empty_pair_sets_;
    return last;
  }
  for (int e = 0; e < cfg_.epochs_per_iteration; ++e) {
    last = trainer_.train_epoch(net_, pairs, false);
    if (last.diverged) ++diverged_epochs_;
  }
  return last;
}

Vec EvoGradOptimizer::descent_step() {
  const Vec proposal = clamp_normalized(descent_update(net_, u_k_, cfg_.step_size));
  Vec x;
  const double y = evaluate(proposal, &x);
  const Vec u_next = tr_.kind() == MapKind::linear ? tr_.from_search(x) : proposal;
  movement_ += (u_next - u_k_).norm();

  if (cfg_.stall_rule == StallRule::strict_worsening) {
    stall_count_ = y > f_k_ ? stall_count_ + 1 : 0;
  } else if (y < best_descent_f_) {
    best_descent_f_ = y;
    stall_count_ = 0;
  } else {
    ++stall_count_;
  }
  f_k_ = y;
  u_k_ = u_next;
  return u_k_;
}

ConvergenceEvent EvoGradOptimizer::handle_convergence() {
  const int n = static_cast<int>(u_k_.size());
  const ConvergenceEvent ev = classify_convergence(movement_, n, cfg_.movement_coeff);
  const Vec best = obj_.has_best() ? obj_.best_x() : tr_.to_search(u_k_);
  if (ev.kind == ConvergenceEvent::Kind::interior) {
    tr_ = tr_.shrink_to(best, cfg_.tr_shrink);
    ++interior_events_;
    eps_ = std::max(cfg_.eps_min, eps0_ * std::pow(cfg_.eps_factor, interior_events_));
  } else {
    tr_ = tr_.shift_to(best);
  }
  buffer_.remap(tr_);
  u_k_ = clamp_normalized(tr_.from_search(best));
  f_k_ = obj_.has_best() ? obj_.best_value() : std::numeric_limits<double>::infinity();
  best_descent_f_ = f_k_;
  stall_count_ = 0;
  movement_ = 0.0;
  reset_cma();
  if (cfg_.reset_net_on_tr) {
    Rng init = init_rng_.split(static_cast<std::uint64_t>(tr_.generation()));
    net_ = GradNet(net_.layer_sizes(), init);
    trainer_.reset();
  }
  if (cfg_.normalizer_refit == NormalizerRefit::tr_event) refit_normalizer();
  rec_.events.push_back(
      {tr_.generation(), std::string(to_string(ev.kind)), obj_.used(), ev.movement, eps_, tr_.center(), tr_.scale()});
  return ev;
}

RunRecord EvoGradOptimizer::run() {
  auto done = [&] { return cfg_.stop_below && obj_.has_best() && obj_.best_normalized() < *cfg_.stop_below; };
  try {
    while (!done()) {
      explore();
      if (obj_.remaining() == 0 || done()) break;
      if (cfg_.normalizer_refit == NormalizerRefit::iteration) refit_normalizer();
      const auto pairs = build_pairs();
      if (pairs.empty()) {
        ++empty_pair_sets_;
        continue;
      }
      train(pairs);
      descent_step();
      if (stalled()) handle_convergence();
    }
  } catch (const BudgetExhausted&) {
  }
  if (diverged_epochs_ > 0)
    rec_.notes.push_back("diverged training epochs (restored, learn rate halved): " + std::to_string(diverged_epochs_));
  if (weight_fallbacks_ > 0)
    rec_.notes.push_back("weight batches that fell back to uniform: " + std::to_string(weight_fallbacks_));
  if (empty_pair_sets_ > 0)
    rec_.notes.push_back("iterations without admissible pairs: " + std::to_string(empty_pair_sets_));
  finalize_record(rec_, obj_);
  return rec_;
}

RunRecord evograd_run(const Problem& problem, const OptimizerConfig& cfg, std::uint64_t seed,
                      const std::optional<Vec>& start) {
  return EvoGradOptimizer(problem, cfg, seed, start).run();
}

}  // namespace evograd
