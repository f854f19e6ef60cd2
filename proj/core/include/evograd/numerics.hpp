#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace evograd {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Counter-based generator: draw k of stream `key` is mix64(key + k * golden).
/// Streams are reproducible across platforms (no std:: distributions are
/// involved) and split() derives statistically independent child streams, so
/// parallel runs do not depend on scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller; the second variate is cached.
  double normal();
  Vec normal_vec(Eigen::Index n);

  /// Independent child stream; does not advance this generator.
  Rng split(std::uint64_t stream) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Uniform sample from the closed ball of radius `eps` around `center`.
/// Direction is a normalized Gaussian vector, radius eps * u^(1/n).
Vec sample_ball(const Vec& center, double eps, Rng& rng);

/// Lower-triangular L with L L^T = C. Throws DecompositionError when C is not
/// symmetric positive definite.
Mat cholesky(const Mat& c);

/// Symmetrizes C and floors its eigenvalues at 1e-12 * trace(C) / n so that
/// the result is positive definite. Throws DecompositionError if C has
/// non-finite entries or a non-positive trace.
Mat repair_covariance(const Mat& c);

/// -(1 / 2 sigma^2) (x - m)^T C^{-1} (x - m), the exponent of the unnormalized
/// Gaussian density.
double gaussian_log_density(const Vec& x, const Vec& m, double sigma, const Mat& c);

/// Same as above with a precomputed Cholesky factor of C.
double gaussian_log_density_chol(const Vec& x, const Vec& m, double sigma, const Mat& chol_l);

bool all_finite(const Vec& v);
bool all_finite(const Mat& m);

}  // namespace evograd
