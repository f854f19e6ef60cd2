#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "evograd/error.hpp"
#include "evograd/evo.hpp"
#include "evograd/objectives.hpp"

using namespace evograd;

namespace {

void expect_pd(const Mat& c) {
  ASSERT_TRUE(c.isApprox(c.transpose(), 1e-12));
  Eigen::SelfAdjointEigenSolver<Mat> es(c);
  ASSERT_GT(es.eigenvalues().minCoeff(), 0.0);
}

std::vector<Candidate> evaluate(const std::vector<Vec>& xs, const std::function<double(const Vec&)>& f) {
  std::vector<Candidate> out;
  for (const auto& x : xs) out.push_back({x, f(x)});
  return out;
}

}  // namespace

TEST(CmaParamsTest, HansenDefaults) {
  EXPECT_EQ(CmaParams::default_lambda(10), 4 + static_cast<int>(std::floor(3 * std::log(10.0))));
  EXPECT_EQ(CmaParams::default_lambda(2), 6);
  const auto p = CmaParams::defaults(10);
  EXPECT_EQ(p.lambda, 10);
  EXPECT_EQ(p.mu, 5);
  EXPECT_GT(p.c_1, 0.0);
  EXPECT_GT(p.c_mu, 0.0);
  EXPECT_LE(p.c_1 + p.c_mu, 1.0);
  EXPECT_EQ(CmaParams::defaults(10, 24).mu, 12);
}

TEST(CmaParamsTest, RecombinationWeightsDecreasePositiveSumOne) {
  for (int mu = 1; mu <= 50; ++mu) {
    const auto w = CmaParams::recombination_weights(mu);
    ASSERT_EQ(static_cast<int>(w.size()), mu);
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-15);
    for (int i = 0; i < mu; ++i) {
      ASSERT_GT(w[i], 0.0);
      if (i > 0) ASSERT_GE(w[i - 1], w[i]);
    }
  }
  const auto w3 = CmaParams::recombination_weights(3);
  const double raw0 = std::log(3.5) - std::log(1.0);
  const double raw2 = std::log(3.5) - std::log(3.0);
  EXPECT_NEAR(w3[0] / w3[2], raw0 / raw2, 1e-12);
}

TEST(CmaSample, CollapsesToMeanForTinySigma) {
  Rng r(1);
  CmaState s = CmaState::initial(Vec::Constant(4, 0.3), 1e-9);
  for (const auto& x : cma_sample(s, 50, r)) EXPECT_LE((x - s.mean).norm(), 10 * 1e-9 * 2.0);
}

TEST(CmaSample, SeededPopulationsIdentical) {
  Rng a(5), b(5);
  CmaState s1 = CmaState::initial(Vec::Zero(3), 0.5);
  CmaState s2 = s1;
  EXPECT_EQ(cma_sample(s1, 8, a), cma_sample(s2, 8, b));
}

TEST(CmaSample, EmpiricalVarianceMatchesCovariance) {
  Rng r(6);
  CmaState s = CmaState::initial(Vec::Zero(2), 0.7);
  s.cov = Vec(Eigen::Vector2d(4.0, 1.0)).asDiagonal();
  const auto xs = cma_sample(s, 100000, r);
  Eigen::Vector2d sq = Eigen::Vector2d::Zero();
  for (const auto& x : xs) sq += x.cwiseProduct(x);
  sq /= static_cast<double>(xs.size());
  EXPECT_NEAR(sq[0] / (0.49 * 4.0), 1.0, 0.03);
  EXPECT_NEAR(sq[1] / (0.49 * 1.0), 1.0, 0.03);
}

TEST(CmaSample, RepairsSingularCovariance) {
  Rng r(7);
  CmaState s = CmaState::initial(Vec::Zero(2), 1.0);
  s.cov << 1, 1, 1, 1;
  const auto xs = cma_sample(s, 4, r);
  EXPECT_EQ(xs.size(), 4u);
  for (const auto& x : xs) EXPECT_TRUE(x.allFinite());
}

TEST(CmaUpdate, SingleEliteRankMuOnly) {
  CmaState s = CmaState::initial(Vec::Zero(3), 0.5);
  s.params.mu = 1;
  s.params.weights = {1.0};
  s.params.mu_eff = 1.0;
  s.params.c_1 = 0.0;
  s.params.c_mu = 1.0;
  const Vec elite = Vec::LinSpaced(3, 0.1, 0.3);
  const std::vector<Candidate> pop{{Vec::Ones(3), 5.0}, {elite, 1.0}, {-Vec::Ones(3), 9.0}};
  const CmaState next = cma_update(s, pop);
  const Vec y = elite / 0.5;
  EXPECT_TRUE(next.cov.isApprox(y * y.transpose(), 1e-14));
  EXPECT_TRUE(next.mean.isApprox(elite, 1e-15));
}

TEST(CmaUpdate, ZeroLearningRatesKeepCovarianceBitExact) {
  Rng r(8);
  CmaState s = CmaState::initial(Vec::Zero(3), 0.5);
  s.cov(0, 1) = s.cov(1, 0) = 0.3;
  s.params.c_1 = 0.0;
  s.params.c_mu = 0.0;
  const auto pop = evaluate(cma_sample(s, 7, r), [](const Vec& x) { return x.squaredNorm(); });
  const CmaState next = cma_update(s, pop);
  EXPECT_EQ(next.cov, s.cov);
  EXPECT_EQ(next.generation, 1);
}

TEST(CmaUpdate, DropsNonFiniteAndSkipsTinyPopulations) {
  CmaState s = CmaState::initial(Vec::Zero(2), 0.5);
  const std::vector<Candidate> pop{{Vec::Ones(2), std::nan("")}, {Vec::Zero(2), 1.0}};
  const CmaState same = cma_update(s, pop);
  EXPECT_EQ(same.mean, s.mean);
  EXPECT_EQ(same.generation, 0);
}

TEST(CmaUpdate, SphereConvergesWithinBudget) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r(seed);
    CmaState s = CmaState::initial(Vec::Constant(10, 1.0), 0.5, 10);
    double best = 1e300;
    long evals = 0;
    while (evals < 5000 && best >= 1e-8) {
      const auto pop = evaluate(cma_sample(s, 10, r), [](const Vec& x) { return x.squaredNorm(); });
      evals += 10;
      for (const auto& c : pop) best = std::min(best, c.f);
      s = cma_update(s, pop);
      expect_pd(s.cov);
      ASSERT_GT(s.sigma, 0.0);
    }
    EXPECT_LT(best, 1e-8) << "seed " << seed;
  }
}

TEST(CmaUpdate, CovarianceStaysPdOnIllConditionedProblem) {
  Rng r(9);
  const Problem p = make_problem("ellipsoid", 5);
  CmaState s = CmaState::initial(Vec::Constant(5, 2.0), 1.0);
  for (int g = 0; g < 300; ++g) {
    const auto pop = evaluate(cma_sample(s, s.params.lambda, r), [&](const Vec& x) { return p.evaluate(x); });
    s = cma_update(s, pop);
    expect_pd(s.cov);
  }
  EXPECT_GT(cma_condition(s), 10.0);
}

TEST(CmaDiagnostics, ConditionAndSpread) {
  CmaState s = CmaState::initial(Vec::Zero(2), 0.5);
  s.cov = Vec(Eigen::Vector2d(9.0, 1.0)).asDiagonal();
  EXPECT_NEAR(cma_condition(s), 9.0, 1e-12);
  EXPECT_NEAR(cma_spread(s), 1.5, 1e-12);
}

TEST(WeightMapTest, DensityHigherAtMean) {
  const CmaState s = CmaState::initial(Vec::Zero(3), 0.5);
  WeightMap map{WeightSource::cma_gaussian, 0.1, &s};
  Vec e1 = Vec::Zero(3);
  e1[0] = 1.0;
  const std::vector<Vec> pts{Vec::Zero(3), e1};
  const std::vector<double> fit{0.0, 0.0};
  const auto w = weights_for(map, pts, fit);
  EXPECT_FALSE(w.fell_back);
  EXPECT_GT(w.weights[0], w.weights[1]);
}

TEST(WeightMapTest, EqualFitnessSoftmaxIsUniform) {
  WeightMap map{WeightSource::softmax, 0.1, nullptr};
  const std::vector<Vec> pts(5, Vec::Zero(2));
  const std::vector<double> fit(5, 3.0);
  for (double w : weights_for(map, pts, fit).weights) EXPECT_NEAR(w, 0.2, 1e-15);
}

TEST(WeightMapTest, UniformSource) {
  WeightMap map{WeightSource::uniform, 0.1, nullptr};
  const std::vector<Vec> pts(4, Vec::Zero(2));
  const std::vector<double> fit{1, 2, 3, 4};
  for (double w : weights_for(map, pts, fit).weights) EXPECT_EQ(w, 0.25);
}

TEST(WeightMapTest, FloorAndSumOverRandomBatches) {
  Rng r(10);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 1 + static_cast<int>(r.below(6));
    const auto b = static_cast<std::size_t>(1 + r.below(128));
    CmaState s = CmaState::initial(r.normal_vec(n), std::exp(r.uniform(-8.0, 2.0)));
    const Vec d = (2.0 * r.normal_vec(n)).array().exp();
    s.cov = d.asDiagonal();
    std::vector<Vec> pts;
    std::vector<double> fit;
    for (std::size_t i = 0; i < b; ++i) {
      pts.push_back(s.mean + 5.0 * r.normal_vec(n));
      fit.push_back(std::exp(6.0 * r.normal()));
    }
    const WeightSource src = trial % 2 ? WeightSource::cma_gaussian : WeightSource::softmax;
    const auto w = weights_for({src, std::exp(r.uniform(-5.0, 2.0)), &s}, pts, fit).weights;
    ASSERT_EQ(w.size(), b);
    double sum = 0.0;
    for (double x : w) {
      ASSERT_GE(x, weight_floor(b));
      sum += x;
    }
    ASSERT_LE(sum, 1.0 + 1e-12);
  }
}

TEST(WeightMapTest, SoftmaxRankMonotone) {
  Rng r(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto b = static_cast<std::size_t>(2 + r.below(64));
    std::vector<Vec> pts(b, Vec::Zero(1));
    std::vector<double> fit;
    for (std::size_t i = 0; i < b; ++i) fit.push_back(r.normal());
    const auto w = weights_for({WeightSource::softmax, 0.1, nullptr}, pts, fit).weights;
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j)
        if (fit[i] <= fit[j]) ASSERT_GE(w[i], w[j]);
  }
}

TEST(WeightMapTest, DegenerateCovarianceFallsBackToUniform) {
  CmaState s = CmaState::initial(Vec::Zero(2), 1.0);
  s.cov << 1, 2, 2, 1;
  const std::vector<Vec> pts{Vec::Zero(2), Vec::Ones(2), -Vec::Ones(2)};
  const std::vector<double> fit{0, 1, 2};
  const auto w = weights_for({WeightSource::cma_gaussian, 0.1, &s}, pts, fit);
  EXPECT_TRUE(w.fell_back);
  for (double x : w.weights) EXPECT_DOUBLE_EQ(x, 1.0 / 3.0);
}

TEST(WeightMapTest, FlooredSoftmaxFormula) {
  const std::vector<double> logits{0.0, std::log(3.0)};
  const auto w = floored_softmax(logits);
  const double floor = weight_floor(2);
  EXPECT_DOUBLE_EQ(floor, 0.05);
  EXPECT_NEAR(w[0], floor + 0.9 * 0.25, 1e-15);
  EXPECT_NEAR(w[1], floor + 0.9 * 0.75, 1e-15);
  const std::vector<double> huge{-1e308, 1e308};
  for (double x : floored_softmax(huge)) EXPECT_TRUE(std::isfinite(x));
}

TEST(WeightSourceNames, RoundTrip) {
  for (auto s : {WeightSource::uniform, WeightSource::cma_gaussian, WeightSource::softmax})
    EXPECT_EQ(weight_source_from_string(to_string(s)), s);
  EXPECT_THROW(weight_source_from_string("boltzmann"), ConfigError);
}

TEST(CmaTr, UnitGammaWithoutStopMatchesPlainCma) {
  const Problem p = make_problem("sphere", 5).with_range({0.0, 125.0});
  CmaRunConfig cfg;
  cfg.budget = 600;
  cfg.gamma = 1.0;
  Rng r1(3), r2(3);
  const RunRecord tr = cma_tr_run(p, cfg, r1);
  cfg.restart_on_stop = false;
  const RunRecord plain = cma_tr_run(p, cfg, r2);
  ASSERT_TRUE(tr.events.empty());
  ASSERT_EQ(tr.trajectory.size(), plain.trajectory.size());
  for (std::size_t i = 0; i < tr.trajectory.size(); ++i) EXPECT_EQ(tr.trajectory[i].f_best, plain.trajectory[i].f_best);
  EXPECT_EQ(tr.algorithm, "CMA-TR");
  EXPECT_EQ(plain.algorithm, "CMA");
}

TEST(CmaTr, TwoRestartsShrinkTo81Percent) {
  const Problem p = make_problem("sphere", 2).with_range({0.0, 50.0});
  CmaRunConfig cfg;
  cfg.budget = 5000;
  cfg.min_spread = 1e-2;
  Rng r(4);
  const RunRecord rec = cma_tr_run(p, cfg, r);
  ASSERT_GE(rec.events.size(), 2u);
  EXPECT_EQ(rec.events[0].kind, "restart");
  for (int i = 0; i < 2; ++i) EXPECT_NEAR(rec.events[1].scale[i], 0.81 * 5.0, 1e-12);
}

TEST(CmaTr, RespectsBudgetAndDeterminism) {
  const Problem p = make_problem("rastrigin", 5).with_range({0.0, 400.0});
  CmaRunConfig cfg;
  cfg.budget = 2003;
  Rng r1(9), r2(9);
  const RunRecord a = cma_tr_run(p, cfg, r1);
  const RunRecord b = cma_tr_run(p, cfg, r2);
  EXPECT_EQ(a.evals_used, 2003);
  EXPECT_EQ(a.serialize(), b.serialize());
  for (std::size_t i = 1; i < a.trajectory.size(); ++i) EXPECT_LE(a.trajectory[i].f_best, a.trajectory[i - 1].f_best);
}

TEST(CmaTr, RejectsBadConfig) {
  const Problem p = make_problem("sphere", 2).with_range({0.0, 50.0});
  Rng r(1);
  CmaRunConfig cfg;
  cfg.budget = 0;
  EXPECT_THROW(cma_tr_run(p, cfg, r), ConfigError);
  cfg.budget = 10;
  cfg.gamma = 0.0;
  EXPECT_THROW(cma_tr_run(p, cfg, r), ConfigError);
}

TEST(CmaTr, NoWorseThanPlainCmaOnSphere20) {
  const Problem p = make_problem("sphere", 20).with_range({0.0, 500.0});
  CmaRunConfig cfg;
  cfg.budget = 20000;
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng r1(seed), r2(seed);
    const double tr = cma_tr_run(p, cfg, r1).f_best;
    CmaRunConfig plain = cfg;
    plain.restart_on_stop = false;
    wins += tr <= cma_tr_run(p, plain, r2).f_best;
  }
  EXPECT_GE(wins, 6);
}
