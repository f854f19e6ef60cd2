// Microbenchmarks for the inner loops of the optimizer.

#include <vector>

#include <benchmark/benchmark.h>

#include "evograd/evo.hpp"
#include "evograd/numerics.hpp"
#include "evograd/optimizer.hpp"
#include "evograd/surrogate.hpp"

using namespace evograd;

namespace {

std::vector<TaylorPair> make_pairs(int n, int count, Rng& r) {
  std::vector<TaylorPair> out;
  for (int i = 0; i < count; ++i) {
    TaylorPair p;
    p.anchor = r.normal_vec(n);
    p.probe = p.anchor + sample_ball(Vec::Zero(n), 0.5, r);
    p.y_anchor = r.normal();
    p.y_probe = r.normal();
    p.weight = 1.0 / count;
    out.push_back(std::move(p));
  }
  return out;
}

void BM_Forward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng r(1);
  const GradNet net(GradNet::default_layers(n), r);
  const Vec x = r.normal_vec(n);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x));
}
BENCHMARK(BM_Forward)->Arg(2)->Arg(10)->Arg(40);

void BM_Jacobian(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng r(2);
  const GradNet net(GradNet::default_layers(n), r);
  const Vec x = r.normal_vec(n);
  for (auto _ : state) benchmark::DoNotOptimize(net.jacobian(x));
}
BENCHMARK(BM_Jacobian)->Arg(2)->Arg(10)->Arg(40);

void BM_LossGradient(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng r(3);
  const GradNet net(GradNet::default_layers(n), r);
  const auto batch = make_pairs(n, 64, r);
  LossConfig cfg;
  cfg.variant = static_cast<LossVariant>(state.range(1));
  cfg.jacobian_attached = state.range(2) != 0;
  Vec grad;
  for (auto _ : state) benchmark::DoNotOptimize(batch_loss_gradient(cfg, net, batch, grad));
}
BENCHMARK(BM_LossGradient)
    ->ArgsProduct({{2, 10, 40},
                   {static_cast<int>(LossVariant::egl), static_cast<int>(LossVariant::evograd2)},
                   {0, 1}});

void BM_CmaGeneration(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Rng r(4);
  CmaState s = CmaState::initial(Vec::Zero(n), 0.5);
  const int lambda = s.params.lambda;
  for (auto _ : state) {
    if (s.sigma < 1e-10) s = CmaState::initial(Vec::Zero(n), 0.5);
    const auto xs = cma_sample(s, lambda, r);
    std::vector<Candidate> pop;
    for (const auto& x : xs) pop.push_back({x, x.squaredNorm()});
    s = cma_update(s, pop);
    benchmark::DoNotOptimize(s.mean.data());
  }
}
BENCHMARK(BM_CmaGeneration)->Arg(10)->Arg(40);

void BM_PairSampling(benchmark::State& state) {
  const int count = static_cast<int>(state.range(0));
  Rng r(5);
  std::vector<Vec> pts;
  for (int i = 0; i < count; ++i) pts.push_back(r.uniform() * r.normal_vec(10));
  for (auto _ : state) benchmark::DoNotOptimize(sample_pair_indices(pts, 0.5, 4000, r));
}
BENCHMARK(BM_PairSampling)->Arg(200)->Arg(5000);

void BM_Weights(benchmark::State& state) {
  const int n = 10;
  Rng r(6);
  const CmaState s = CmaState::initial(Vec::Zero(n), 0.3);
  std::vector<Vec> pts;
  std::vector<double> fit;
  for (int i = 0; i < 64; ++i) {
    pts.push_back(0.3 * r.normal_vec(n));
    fit.push_back(r.normal());
  }
  const WeightMap map{WeightSource::cma_gaussian, 0.1, &s};
  for (auto _ : state) benchmark::DoNotOptimize(weights_for(map, pts, fit));
}
BENCHMARK(BM_Weights);

}  // namespace
BENCHMARK_MAIN();
