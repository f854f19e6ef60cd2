#include "evograd/numerics.hpp"

#include <cmath>
#include <numbers>

#include "evograd/error.hpp"

namespace evograd {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

}  // namespace

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

Rng::Rng(std::uint64_t seed) : seed_(seed), key_(mix64(seed ^ 0x5851F42D4C957F2DULL)) {}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

namespace {
__extension__ typedef unsigned __int128 u128;
}  // namespace

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw DomainError("Rng::below: n must be positive");
  // Lemire's multiply-shift with rejection of the biased low region.
  u128 m = static_cast<u128>(next_u64()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<u128>(next_u64()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Vec Rng::normal_vec(Eigen::Index n) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
  return v;
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(mix64(key_ ^ mix64(stream + kGolden)) + counter_);
}

Vec sample_ball(const Vec& center, double eps, Rng& rng) {
  if (!(eps >= 0.0)) throw DomainError("sample_ball: eps must be non-negative");
  const Eigen::Index n = center.size();
  if (n < 1) throw DomainError("sample_ball: empty center");
  if (eps == 0.0) return center;

  Vec dir = rng.normal_vec(n);
  double norm = dir.norm();
  while (norm == 0.0) {
    dir = rng.normal_vec(n);
    norm = dir.norm();
  }
  const double radius = eps * std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
  Vec out = center + (radius / norm) * dir;
  // Rounding can push the point a few ulps past the sphere.
  const double dist = (out - center).norm();
  if (dist > eps) out = center + (out - center) * (eps / dist);
  return out;
}

Mat cholesky(const Mat& c) {
  if (c.rows() != c.cols() || c.rows() == 0) throw DecompositionError("cholesky: matrix must be square and non-empty");
  if (!all_finite(c)) throw DecompositionError("cholesky: non-finite entries");
  const double scale = c.cwiseAbs().maxCoeff();
  if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1.0)) {
    throw DecompositionError("cholesky: matrix is not symmetric");
  }
  Eigen::LLT<Mat> llt(c);
  if (llt.info() != Eigen::Success) throw DecompositionError("cholesky: matrix is not positive definite");
  Mat l = llt.matrixL();
  if (!all_finite(l)) throw DecompositionError("cholesky: factor is not finite");
  return l;
}

Mat repair_covariance(const Mat& c) {
  if (c.rows() != c.cols() || c.rows() == 0) throw DecompositionError("repair_covariance: matrix must be square");
  if (!all_finite(c)) throw DecompositionError("repair_covariance: non-finite entries");
  const Mat sym = 0.5 * (c + c.transpose());
  const double trace = sym.trace();
  if (!(trace > 0.0)) throw DecompositionError("repair_covariance: trace must be positive");
  const double floor = 1e-12 * trace / static_cast<double>(sym.rows());

  Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
  if (eig.info() != Eigen::Success) throw DecompositionError("repair_covariance: eigen decomposition failed");
  const Vec values = eig.eigenvalues().cwiseMax(floor);
  Mat out = eig.eigenvectors() * values.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

double gaussian_log_density_chol(const Vec& x, const Vec& m, double sigma, const Mat& chol_l) {
  if (!(sigma > 0.0)) throw DomainError("gaussian_log_density: sigma must be positive");
  const Vec z = chol_l.triangularView<Eigen::Lower>().solve(x - m);
  return -0.5 * z.squaredNorm() / (sigma * sigma);
}

double gaussian_log_density(const Vec& x, const Vec& m, double sigma, const Mat& c) {
  return gaussian_log_density_chol(x, m, sigma, cholesky(c));
}

bool all_finite(const Vec& v) { return v.allFinite(); }
bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace evograd
