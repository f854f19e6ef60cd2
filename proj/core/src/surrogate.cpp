#include "evograd/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "evograd/error.hpp"

namespace evograd {

std::string_view to_string(LossVariant v) {
  switch (v) {
    case LossVariant::egl: return "egl";
    case LossVariant::evograd: return "evograd";
    case LossVariant::hgrad: return "hgrad";
    case LossVariant::evograd2: return "evograd2";
  }
  return "?";
}

LossVariant loss_variant_from_string(std::string_view name) {
  if (name == "egl") return LossVariant::egl;
  if (name == "evograd") return LossVariant::evograd;
  if (name == "hgrad") return LossVariant::hgrad;
  if (name == "evograd2") return LossVariant::evograd2;
  throw ConfigError("unknown loss variant '" + std::string(name) + "'");
}

bool has_hessian_term(LossVariant v) { return v == LossVariant::hgrad || v == LossVariant::evograd2; }
bool uses_pair_weights(LossVariant v) { return v == LossVariant::evograd || v == LossVariant::evograd2; }

// ---------------------------------------------------------------------------
// GradNet

GradNet::GradNet(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) { layout(); }

GradNet::GradNet(std::vector<int> layer_sizes, Rng& rng) : GradNet(std::move(layer_sizes)) {
  for (int l = 0; l < num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    auto w = weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-bound, bound);
    auto b = bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.uniform(-bound, bound);
  }
}

void GradNet::layout() {
  if (sizes_.size() < 2) throw ConfigError("GradNet: need at least input and output layers");
  if (sizes_.front() != sizes_.back()) throw ConfigError("GradNet: output dimension must equal input dimension");
  for (int s : sizes_)
    if (s < 1) throw ConfigError("GradNet: layer sizes must be positive");
  Eigen::Index offset = 0;
  for (int l = 0; l < num_layers(); ++l) {
    w_offset_.push_back(offset);
    offset += static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l];
    b_offset_.push_back(offset);
    offset += sizes_[l + 1];
  }
  params_ = Vec::Zero(offset);
}

std::vector<int> GradNet::default_layers(int dim) { return {dim, 10, 15, 10, dim}; }

Eigen::Map<const Mat> GradNet::weight(int l) const {
  return {params_.data() + w_offset_[l], sizes_[l + 1], sizes_[l]};
}
Eigen::Map<Mat> GradNet::weight(int l) { return {params_.data() + w_offset_[l], sizes_[l + 1], sizes_[l]}; }
Eigen::Map<const Vec> GradNet::bias(int l) const { return {params_.data() + b_offset_[l], sizes_[l + 1]}; }
Eigen::Map<Vec> GradNet::bias(int l) { return {params_.data() + b_offset_[l], sizes_[l + 1]}; }

Mat GradNet::forward_batch(const Mat& xs) const {
  if (xs.rows() != dim()) throw DomainError("GradNet: input dimension mismatch");
  Mat h = xs;
  for (int l = 0; l < num_layers(); ++l) {
    Mat z = weight(l) * h;
    z.colwise() += bias(l);
    h = l + 1 < num_layers() ? Mat(z.array().tanh()) : std::move(z);
  }
  return h;
}

Vec GradNet::forward(const Vec& x) const { return forward_batch(x); }

Mat GradNet::jacobian(const Vec& x) const {
  if (x.size() != dim()) throw DomainError("GradNet::jacobian: input dimension mismatch");
  Vec h = x;
  Mat tangent = Mat::Identity(dim(), dim());
  for (int l = 0; l < num_layers(); ++l) {
    Vec z = weight(l) * h + bias(l);
    tangent = weight(l) * tangent;
    if (l + 1 < num_layers()) {
      h = z.array().tanh();
      tangent = (1.0 - h.array().square()).matrix().asDiagonal() * tangent;
    }
  }
  return tangent;
}

Vec GradNet::jvp(const Vec& x, const Vec& v) const {
  if (x.size() != dim() || v.size() != dim()) throw DomainError("GradNet::jvp: dimension mismatch");
  Vec h = x;
  Vec t = v;
  for (int l = 0; l < num_layers(); ++l) {
    Vec z = weight(l) * h + bias(l);
    t = weight(l) * t;
    if (l + 1 < num_layers()) {
      h = z.array().tanh();
      t = t.cwiseProduct((1.0 - h.array().square()).matrix());
    }
  }
  return t;
}

nlohmann::json GradNet::checkpoint() const {
  return nlohmann::json{{"layers", sizes_},
                        {"params", std::vector<double>(params_.data(), params_.data() + params_.size())}};
}

GradNet GradNet::from_checkpoint(const nlohmann::json& j) {
  GradNet net(j.at("layers").get<std::vector<int>>());
  const auto p = j.at("params").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(p.size()) != net.params_.size())
    throw ConfigError("GradNet checkpoint: parameter count does not match layer sizes");
  net.params_ = Eigen::Map<const Vec>(p.data(), static_cast<Eigen::Index>(p.size()));
  return net;
}

// ---------------------------------------------------------------------------
// Losses

namespace {

struct BatchData {
  Mat anchors;  // n x B
  Mat taus;     // n x B
  Vec dy;       // y_anchor - y_probe
  Vec weights;  // effective
};

BatchData pack(const LossConfig& cfg, int dim, std::span<const TaylorPair> batch) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  BatchData d{Mat(dim, b), Mat(dim, b), Vec(b), Vec(b)};
  const auto w = effective_weights(cfg, batch);
  for (Eigen::Index i = 0; i < b; ++i) {
    const TaylorPair& p = batch[static_cast<std::size_t>(i)];
    if (p.anchor.size() != dim || p.probe.size() != dim) throw DomainError("TaylorPair: dimension mismatch");
    d.anchors.col(i) = p.anchor;
    d.taus.col(i) = p.probe - p.anchor;
    d.dy[i] = p.y_anchor - p.y_probe;
    d.weights[i] = w[static_cast<std::size_t>(i)];
  }
  return d;
}

/// Forward pass storing what the reverse pass needs. h[l] is the input of
/// layer l (h[0] = anchors, h[L] = network output); t[l] the matching
/// tangent along tau; zt[l] the pre-activation tangent W_l t[l].
struct Tape {
  std::vector<Mat> h;
  std::vector<Mat> t;
  std::vector<Mat> zt;
};

Tape record(const GradNet& net, const Mat& xs, const Mat* taus) {
  const int layers = net.num_layers();
  Tape tape;
  tape.h.reserve(layers + 1);
  tape.h.push_back(xs);
  if (taus) {
    tape.t.reserve(layers + 1);
    tape.zt.reserve(layers);
    tape.t.push_back(*taus);
  }
  for (int l = 0; l < layers; ++l) {
    Mat z = net.weight(l) * tape.h[l];
    z.colwise() += net.bias(l);
    const bool hidden = l + 1 < layers;
    if (hidden) z = z.array().tanh();
    if (taus) {
      Mat zt = net.weight(l) * tape.t[l];
      if (hidden) {
        tape.t.push_back(((1.0 - z.array().square()) * zt.array()).matrix());
      } else {
        tape.t.push_back(zt);
      }
      tape.zt.push_back(std::move(zt));
    }
    tape.h.push_back(std::move(z));
  }
  return tape;
}

/// r_b = dy_b + g_b . tau_b + 1/2 tau_b . (J tau)_b
Vec residuals(const BatchData& d, const Mat& g, const Mat* jt) {
  Vec r = d.dy + (g.cwiseProduct(d.taus)).colwise().sum().transpose();
  if (jt) r += 0.5 * (jt->cwiseProduct(d.taus)).colwise().sum().transpose();
  return r;
}

}  // namespace

std::vector<double> effective_weights(const LossConfig& cfg, std::span<const TaylorPair> batch) {
  std::vector<double> w(batch.size());
  if (uses_pair_weights(cfg.variant)) {
    for (std::size_t i = 0; i < batch.size(); ++i) w[i] = batch[i].weight;
  } else {
    const double u = batch.empty() ? 0.0 : 1.0 / static_cast<double>(batch.size());
    std::fill(w.begin(), w.end(), u);
  }
  return w;
}

double residual(const LossConfig& cfg, const GradNet& net, const TaylorPair& pair) {
  if (pair.anchor.size() != net.dim() || pair.probe.size() != net.dim())
    throw DomainError("residual: dimension mismatch");
  const Vec tau = pair.probe - pair.anchor;
  double r = pair.y_anchor - pair.y_probe + net.forward(pair.anchor).dot(tau);
  if (has_hessian_term(cfg.variant)) r += 0.5 * tau.dot(net.jvp(pair.anchor, tau));
  return r;
}

double batch_loss(const LossConfig& cfg, const GradNet& net, std::span<const TaylorPair> batch) {
  return batch_loss_frozen_jacobian(cfg, net, net, batch);
}

double batch_loss_frozen_jacobian(const LossConfig& cfg, const GradNet& net, const GradNet& jacobian_net,
                                  std::span<const TaylorPair> batch) {
  if (batch.empty()) return 0.0;
  const BatchData d = pack(cfg, net.dim(), batch);
  const Mat g = net.forward_batch(d.anchors);
  Vec r;
  if (has_hessian_term(cfg.variant)) {
    const Tape tape = record(jacobian_net, d.anchors, &d.taus);
    r = residuals(d, g, &tape.t.back());
  } else {
    r = residuals(d, g, nullptr);
  }
  return d.weights.dot(r.cwiseAbs2());
}

double batch_loss_gradient(const LossConfig& cfg, const GradNet& net, std::span<const TaylorPair> batch, Vec& grad) {
  grad = Vec::Zero(net.params().size());
  if (batch.empty()) return 0.0;

  const bool hessian = has_hessian_term(cfg.variant);
  const bool attached = hessian && cfg.jacobian_attached;
  const BatchData d = pack(cfg, net.dim(), batch);
  const Tape tape = record(net, d.anchors, hessian ? &d.taus : nullptr);
  const int layers = net.num_layers();

  const Vec r = residuals(d, tape.h.back(), hessian ? &tape.t.back() : nullptr);
  const double loss = d.weights.dot(r.cwiseAbs2());

  // dL/dr_b = 2 w_b r_b; the output adjoint of g is tau * rbar and, when
  // attached, the adjoint of the output tangent is tau * rbar / 2.
  const Eigen::RowVectorXd rbar = (2.0 * d.weights.cwiseProduct(r)).transpose();
  Mat hbar = (d.taus.array().rowwise() * rbar.array()).matrix();
  Mat tbar;
  if (attached) tbar = 0.5 * hbar;

  // Hidden layer l (l < L-1) maps h[l] -> h[l+1] = tanh(z), t[l+1] = s * zt[l],
  // s = 1 - h[l+1]^2. Output layer is affine in both h and t.
  for (int l = layers - 1; l >= 0; --l) {
    Mat zbar;
    Mat ztbar;
    if (l == layers - 1) {
      zbar = std::move(hbar);
      if (attached) ztbar = std::move(tbar);
    } else {
      const auto& out = tape.h[l + 1];
      const Eigen::ArrayXXd s = 1.0 - out.array().square();
      Eigen::ArrayXXd hb = hbar.array();
      if (attached) {
        ztbar = (s * tbar.array()).matrix();
        // ds/dh = -2h, and t[l+1] depends on h[l+1] through s.
        hb += (tape.zt[l].array() * tbar.array()) * (-2.0 * out.array());
      }
      zbar = (hb * s).matrix();
    }

    Eigen::Map<Mat> gw(grad.data() + (net.weight(l).data() - net.params().data()), net.weight(l).rows(),
                       net.weight(l).cols());
    Eigen::Map<Vec> gb(grad.data() + (net.bias(l).data() - net.params().data()), net.bias(l).size());
    gw.noalias() += zbar * tape.h[l].transpose();
    gb += zbar.rowwise().sum();
    if (attached) gw.noalias() += ztbar * tape.t[l].transpose();

    if (l > 0) {
      hbar.noalias() = net.weight(l).transpose() * zbar;
      if (attached) tbar.noalias() = net.weight(l).transpose() * ztbar;
    }
  }
  return loss;
}

double epoch_loss(const LossConfig& cfg, const GradNet& net, std::span<const TaylorPair> pairs) {
  if (pairs.empty()) return 0.0;
  const auto bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start < pairs.size(); start += bs, ++batches)
    total += batch_loss(cfg, net, pairs.subspan(start, std::min(bs, pairs.size() - start)));
  return total / static_cast<double>(batches);
}

// ---------------------------------------------------------------------------
// Trainer

SurrogateTrainer::SurrogateTrainer(LossConfig cfg) : cfg_(cfg) {
  if (cfg_.batch_size < 1) throw ConfigError("SurrogateTrainer: batch size must be positive");
  if (!(cfg_.learn_rate > 0.0)) throw ConfigError("SurrogateTrainer: learn rate must be positive");
}

void SurrogateTrainer::reset() {
  m_.resize(0);
  v_.resize(0);
  t_ = 0;
}

void SurrogateTrainer::step(GradNet& net, const Vec& grad) {
  if (cfg_.algorithm == TrainAlgorithm::sgd) {
    net.params() -= cfg_.learn_rate * grad;
    return;
  }
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double eps = 1e-8;
  if (m_.size() != grad.size()) {
    m_ = Vec::Zero(grad.size());
    v_ = Vec::Zero(grad.size());
    t_ = 0;
  }
  ++t_;
  m_ = beta1 * m_ + (1.0 - beta1) * grad;
  v_ = beta2 * v_ + (1.0 - beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  net.params().array() -= cfg_.learn_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps);
}

EpochResult SurrogateTrainer::train_epoch(GradNet& net, std::span<const TaylorPair> pairs, bool measure_loss) {
  if (pairs.empty()) throw DomainError("train_epoch: no pairs");
  const Vec saved_params = net.params();
  const Vec saved_m = m_;
  const Vec saved_v = v_;
  const long saved_t = t_;

  const auto bs = static_cast<std::size_t>(cfg_.batch_size);
  EpochResult out;
  double running = 0.0;
  Vec grad;
  for (std::size_t start = 0; start < pairs.size(); start += bs) {
    const auto batch = pairs.subspan(start, std::min(bs, pairs.size() - start));
    const double loss = batch_loss_gradient(cfg_, net, batch, grad);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      net.params() = saved_params;
      m_ = saved_m;
      v_ = saved_v;
      t_ = saved_t;
      cfg_.learn_rate *= 0.5;
      return EpochResult{std::numeric_limits<double>::quiet_NaN(), true, out.steps};
    }
    running += loss;
    step(net, grad);
    ++out.steps;
  }
  if (!net.params().allFinite()) {
    net.params() = saved_params;
    m_ = saved_m;
    v_ = saved_v;
    t_ = saved_t;
    cfg_.learn_rate *= 0.5;
    return EpochResult{std::numeric_limits<double>::quiet_NaN(), true, out.steps};
  }
  out.loss = measure_loss ? epoch_loss(cfg_, net, pairs) : running / out.steps;
  return out;
}

}  // namespace evograd
