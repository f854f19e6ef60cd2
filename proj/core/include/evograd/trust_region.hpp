#pragma once

#include <span>
#include <string_view>

#include "evograd/numerics.hpp"

namespace evograd {

enum class MapKind { tanh, linear };

std::string_view to_string(MapKind kind);
MapKind map_kind_from_string(std::string_view name);

/// Box-shaped trust region mapping normalized coordinates u to the search
/// space: x = center + scale * tanh(u) (tanh kind) or
/// x = clip(center + scale * u, domain) (linear kind).
///
/// For the tanh kind the image [center - scale, center + scale] is kept
/// inside the domain; lifecycle operations return new values.
class TrustRegion {
 public:
  TrustRegion(Vec center, Vec scale, MapKind kind, Vec lower, Vec upper, int generation = 0);

  /// Region covering the whole domain: center at the midpoint, scale equal to
  /// the half-width.
  static TrustRegion covering(const Vec& lower, const Vec& upper, MapKind kind);

  Vec to_search(const Vec& u) const;
  /// Inverse of to_search. Throws DomainError when x is not in the open
  /// image (tanh kind) or has the wrong dimension.
  Vec from_search(const Vec& x) const;
  bool in_image(const Vec& x) const;

  /// Interior convergence: recenter on `best` and multiply the scale by
  /// gamma. For the tanh kind the center is pulled inward when the shrunk
  /// box would leave the domain, so best itself stays in the open image.
  TrustRegion shrink_to(const Vec& best, double gamma) const;
  /// Boundary convergence: recenter without touching the scale.
  TrustRegion shift_to(const Vec& best) const;

  const Vec& center() const { return center_; }
  const Vec& scale() const { return scale_; }
  MapKind kind() const { return kind_; }
  int generation() const { return generation_; }
  const Vec& lower() const { return lower_; }
  const Vec& upper() const { return upper_; }
  int dim() const { return static_cast<int>(center_.size()); }

 private:
  Vec placed_center(const Vec& best, const Vec& scale) const;

  Vec center_;
  Vec scale_;
  MapKind kind_;
  Vec lower_;
  Vec upper_;
  int generation_;
};

struct ConvergenceEvent {
  enum class Kind { interior, boundary };
  Kind kind = Kind::interior;
  double movement = 0.0;
};

std::string_view to_string(ConvergenceEvent::Kind kind);

/// 0.2 * sqrt(dim), in normalized units.
double movement_threshold(int dim, double coeff = 0.2);

/// Boundary iff movement >= coeff * sqrt(dim).
ConvergenceEvent classify_convergence(double movement, int dim, double coeff = 0.2);

/// Affine output normalization y -> (y - shift) / scale. shift is the median
/// and scale the width of the [q, 1-q] quantile band of the fitted values
/// after clipping them to that band.
class ValueNormalizer {
 public:
  ValueNormalizer() = default;

  static ValueNormalizer fit(std::span<const double> ys, double outlier_quantile);

  double normalize(double y) const { return (y - shift_) / scale_; }
  double denormalize(double y) const { return y * scale_ + shift_; }
  double clip(double y) const;

  double shift() const { return shift_; }
  double scale() const { return scale_; }
  double lower_clip() const { return lo_; }
  double upper_clip() const { return hi_; }
  double outlier_quantile() const { return quantile_; }

  static constexpr double kScaleFloor = 1e-12;

 private:
  double shift_ = 0.0;
  double scale_ = 1.0;
  double lo_ = 0.0;
  double hi_ = 0.0;
  double quantile_ = 0.1;
};

/// Linear-interpolation quantile (the "type 7" definition) of unsorted data.
double quantile(std::span<const double> values, double q);

}  // namespace evograd
