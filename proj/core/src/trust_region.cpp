#include "evograd/trust_region.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "evograd/error.hpp"

namespace evograd {

std::string_view to_string(MapKind kind) { return kind == MapKind::tanh ? "tanh" : "linear"; }

MapKind map_kind_from_string(std::string_view name) {
  if (name == "tanh") return MapKind::tanh;
  if (name == "linear") return MapKind::linear;
  throw ConfigError("unknown trust-region map kind '" + std::string(name) + "'");
}

std::string_view to_string(ConvergenceEvent::Kind kind) {
  return kind == ConvergenceEvent::Kind::interior ? "interior" : "boundary";
}

TrustRegion::TrustRegion(Vec center, Vec scale, MapKind kind, Vec lower, Vec upper, int generation)
    : center_(std::move(center)),
      scale_(std::move(scale)),
      kind_(kind),
      lower_(std::move(lower)),
      upper_(std::move(upper)),
      generation_(generation) {
  const auto n = center_.size();
  if (n == 0 || scale_.size() != n || lower_.size() != n || upper_.size() != n)
    throw ConfigError("TrustRegion: inconsistent dimensions");
  if (!(scale_.array() > 0.0).all()) throw ConfigError("TrustRegion: scale must be positive");
}

TrustRegion TrustRegion::covering(const Vec& lower, const Vec& upper, MapKind kind) {
  return TrustRegion(0.5 * (lower + upper), 0.5 * (upper - lower), kind, lower, upper, 0);
}

Vec TrustRegion::to_search(const Vec& u) const {
  if (u.size() != center_.size()) throw DomainError("TrustRegion::to_search: dimension mismatch");
  if (kind_ == MapKind::tanh) return center_ + scale_.cwiseProduct(u.array().tanh().matrix());
  return (center_ + scale_.cwiseProduct(u)).cwiseMax(lower_).cwiseMin(upper_);
}

bool TrustRegion::in_image(const Vec& x) const {
  if (x.size() != center_.size()) return false;
  if (kind_ == MapKind::tanh) return (((x - center_).array().abs() / scale_.array()) < 1.0).all();
  return ((x.array() >= lower_.array()) && (x.array() <= upper_.array())).all();
}

Vec TrustRegion::from_search(const Vec& x) const {
  if (x.size() != center_.size()) throw DomainError("TrustRegion::from_search: dimension mismatch");
  const Vec t = (x - center_).cwiseQuotient(scale_);
  if (kind_ == MapKind::linear) return t;
  if (!((t.array().abs() < 1.0).all())) throw DomainError("TrustRegion::from_search: point outside the tanh image");
  return t.array().atanh().matrix();
}

Vec TrustRegion::placed_center(const Vec& best, const Vec& scale) const {
  if (kind_ == MapKind::linear) return best;
  Vec c = best;
  for (Eigen::Index i = 0; i < c.size(); ++i) {
    const double lo = lower_[i] + scale[i];
    const double hi = upper_[i] - scale[i];
    c[i] = lo <= hi ? std::clamp(best[i], lo, hi) : 0.5 * (lower_[i] + upper_[i]);
  }
  return c;
}

TrustRegion TrustRegion::shrink_to(const Vec& best, double gamma) const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("TrustRegion::shrink_to: gamma must lie in (0, 1]");
  if (best.size() != center_.size()) throw DomainError("TrustRegion::shrink_to: dimension mismatch");
  const Vec scale = gamma * scale_;
  return TrustRegion(placed_center(best, scale), scale, kind_, lower_, upper_, generation_ + 1);
}

TrustRegion TrustRegion::shift_to(const Vec& best) const {
  if (best.size() != center_.size()) throw DomainError("TrustRegion::shift_to: dimension mismatch");
  return TrustRegion(placed_center(best, scale_), scale_, kind_, lower_, upper_, generation_ + 1);
}

double movement_threshold(int dim, double coeff) { return coeff * std::sqrt(static_cast<double>(dim)); }

ConvergenceEvent classify_convergence(double movement, int dim, double coeff) {
  if (!(movement >= 0.0)) throw DomainError("classify_convergence: movement must be non-negative");
  const auto kind = movement >= movement_threshold(dim, coeff) ? ConvergenceEvent::Kind::boundary
                                                               : ConvergenceEvent::Kind::interior;
  return ConvergenceEvent{kind, movement};
}

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw DomainError("quantile: empty input");
  std::vector<double> v(values.begin(), values.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto k = static_cast<std::size_t>(std::floor(pos));
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
  const double lo = v[k];
  if (k + 1 >= v.size()) return lo;
  const double hi = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(k) + 1, v.end());
  return lo + (pos - static_cast<double>(k)) * (hi - lo);
}

double ValueNormalizer::clip(double y) const { return std::clamp(y, lo_, hi_); }

ValueNormalizer ValueNormalizer::fit(std::span<const double> ys, double outlier_quantile) {
  if (ys.size() < 2) throw DomainError("ValueNormalizer::fit: need at least two values");
  if (!(outlier_quantile > 0.0 && outlier_quantile < 0.5))
    throw ConfigError("ValueNormalizer::fit: outlier quantile must lie in (0, 0.5)");

  ValueNormalizer out;
  out.quantile_ = outlier_quantile;
  out.lo_ = quantile(ys, outlier_quantile);
  out.hi_ = quantile(ys, 1.0 - outlier_quantile);

  std::vector<double> clipped(ys.begin(), ys.end());
  for (double& y : clipped) y = std::clamp(y, out.lo_, out.hi_);
  out.shift_ = quantile(clipped, 0.5);
  out.scale_ = std::max(out.hi_ - out.lo_, kScaleFloor);
  return out;
}

}  // namespace evograd
