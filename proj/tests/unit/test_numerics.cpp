#include <gtest/gtest.h>

#include <cmath>

#include "evograd/error.hpp"
#include "evograd/numerics.hpp"
#include "oracles.hpp"

using namespace evograd;

namespace {

Mat random_pd(int n, Rng& rng) {
  Mat a(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) a(i, j) = rng.normal();
  return a * a.transpose() + 0.1 * Mat::Identity(n, n);
}

double inf_norm(const Mat& m) { return m.cwiseAbs().rowwise().sum().maxCoeff(); }

}  // namespace

TEST(Rng, EqualSeedsGiveIdenticalStreams) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.normal(), b.normal());
}

TEST(Rng, DifferentSeedsDiffer) {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 100; ++i) same += a.next_u64() == b.next_u64();
  EXPECT_EQ(same, 0);
}

TEST(Rng, SplitDoesNotAdvanceParent) {
  Rng a(7), b(7);
  const Rng child = a.split(3);
  (void)child;
  EXPECT_EQ(a.next_u64(), b.next_u64());
  Rng c1 = a.split(1), c2 = a.split(1), c3 = a.split(2);
  EXPECT_EQ(c1.next_u64(), c2.next_u64());
  EXPECT_NE(a.split(1).next_u64(), c3.next_u64());
}

TEST(Rng, UniformAndBelowRanges) {
  Rng r(3);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    ASSERT_LT(r.below(7), 7u);
  }
  EXPECT_THROW(r.below(0), DomainError);
}

TEST(Rng, NormalMoments) {
  Rng r(11);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(SampleBall, ZeroRadiusReturnsCenter) {
  Rng r(1);
  const Vec c = Vec::LinSpaced(4, -1.0, 2.0);
  EXPECT_EQ(sample_ball(c, 0.0, r), c);
}

TEST(SampleBall, OneDimensionalStaysInInterval) {
  Rng r(2);
  for (int i = 0; i < 10000; ++i) {
    const double v = sample_ball(Vec::Zero(1), 2.0, r)[0];
    ASSERT_GE(v, -2.0);
    ASSERT_LE(v, 2.0);
  }
}

TEST(SampleBall, NegativeRadiusThrows) {
  Rng r(1);
  EXPECT_THROW(sample_ball(Vec::Zero(2), -1.0, r), DomainError);
}

TEST(SampleBall, MeanRadiusMatchesClosedForm) {
  // E||tau|| = eps * n / (n + 1) for the uniform ball.
  Rng r(5);
  const int draws = 100000;
  double sum = 0.0;
  for (int i = 0; i < draws; ++i) sum += sample_ball(Vec::Zero(3), 1.0, r).norm();
  EXPECT_NEAR(sum / draws, 0.75, 0.02 * 0.75);
}

TEST(SampleBall, NeverExceedsRadius) {
  Rng r(9);
  for (int n : {1, 2, 5, 20, 80}) {
    const Vec c = Vec::Constant(n, 0.3);
    for (double eps : {1e-6, 0.1, 1.0, 7.5}) {
      for (int i = 0; i < 2000; ++i) ASSERT_LE((sample_ball(c, eps, r) - c).norm(), eps);
    }
  }
}

TEST(SampleBall, DirectionIsIsotropic) {
  Rng r(4);
  Vec mean = Vec::Zero(3);
  const int draws = 50000;
  for (int i = 0; i < draws; ++i) mean += sample_ball(Vec::Zero(3), 1.0, r);
  EXPECT_LT((mean / draws).norm(), 0.01);
}

TEST(Cholesky, IdentityIsItsOwnFactor) {
  EXPECT_TRUE(cholesky(Mat::Identity(4, 4)).isApprox(Mat::Identity(4, 4)));
}

TEST(Cholesky, ReconstructsTwoByTwo) {
  Mat c(2, 2);
  c << 4, 2, 2, 3;
  const Mat l = cholesky(c);
  EXPECT_EQ(l(0, 1), 0.0);
  EXPECT_LE(inf_norm(l * l.transpose() - c), 1e-12);
}

TEST(Cholesky, IndefiniteThrows) {
  Mat c(2, 2);
  c << 1, 2, 2, 1;
  EXPECT_THROW(cholesky(c), DecompositionError);
}

TEST(Cholesky, RejectsAsymmetricAndNonFinite) {
  Mat a(2, 2);
  a << 2, 1, 0, 2;
  EXPECT_THROW(cholesky(a), DecompositionError);
  Mat b = Mat::Identity(2, 2);
  b(0, 0) = std::nan("");
  EXPECT_THROW(cholesky(b), DecompositionError);
}

TEST(Cholesky, RoundTripOnRandomPdMatrices) {
  Rng r(123);
  for (int k = 0; k < 1000; ++k) {
    const int n = 1 + static_cast<int>(r.below(20));
    const Mat c = random_pd(n, r);
    const Mat l = cholesky(c);
    ASSERT_LE(inf_norm(l * l.transpose() - c) / inf_norm(c), 1e-10) << "case " << k;
    ASSERT_TRUE(l.isLowerTriangular());
  }
}

TEST(RepairCovariance, FloorsEigenvalues) {
  Mat c(2, 2);
  c << 1, 1, 1, 1;  // singular
  const Mat fixed = repair_covariance(c);
  EXPECT_NO_THROW(cholesky(fixed));
  Eigen::SelfAdjointEigenSolver<Mat> es(fixed);
  // Reconstruction is accurate to about machine epsilon times the norm.
  EXPECT_GE(es.eigenvalues().minCoeff(), 1e-12 * c.trace() / 2 - 1e-15 * c.trace());
  EXPECT_NEAR(fixed(0, 1), 1.0, 1e-9);
}

TEST(GaussianLogDensity, ZeroAtMean) {
  const Vec m = Vec::Constant(3, 0.5);
  EXPECT_EQ(gaussian_log_density(m, m, 0.7, Mat::Identity(3, 3)), 0.0);
}

TEST(GaussianLogDensity, IsotropicUnitCase) {
  Vec x = Vec::Zero(3);
  x[1] = 1.0;
  EXPECT_DOUBLE_EQ(gaussian_log_density(x, Vec::Zero(3), 1.0, Mat::Identity(3, 3)), -0.5);
}

TEST(GaussianLogDensity, MatchesDenseInverseOracle) {
  Rng r(77);
  for (int k = 0; k < 200; ++k) {
    const int n = 1 + static_cast<int>(r.below(8));
    const Mat c = random_pd(n, r);
    const Vec x = r.normal_vec(n);
    const Vec m = r.normal_vec(n);
    const double sigma = 0.2 + r.uniform();
    const double got = gaussian_log_density(x, m, sigma, c);
    const double want = oracle::quad_form_dense(x, m, sigma, c);
    ASSERT_NEAR(got, want, 1e-10 * std::max(1.0, std::abs(want)));
  }
}

TEST(GaussianLogDensity, SingularCovarianceThrows) {
  Mat c(2, 2);
  c << 1, 1, 1, 1;
  EXPECT_THROW(gaussian_log_density(Vec::Zero(2), Vec::Ones(2), 1.0, c), DecompositionError);
}
