#include <benchmark/benchmark.h>

#include "maxgnr/gnr.hpp"
#include "maxgnr/noise_model.hpp"
#include "maxgnr/strategies.hpp"
#include "maxgnr/tasks.hpp"
#include "maxgnr/trainer.hpp"

namespace {

using namespace maxgnr;

void BM_SolveWeights(benchmark::State& state) {
  const auto tasks = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 1024;
  RandomStream rng(1);
  std::vector<ParamVector> momenta, noises;
  for (std::size_t k = 0; k < tasks; ++k) {
    momenta.push_back(random_gradient(dim, 1.0 + rng.uniform(), rng.next_u64()));
    noises.push_back(random_gradient(dim, 0.5 + rng.uniform(), rng.next_u64()));
  }
  for (auto _ : state) benchmark::DoNotOptimize(solve_weights(momenta, noises, SolverConfig{}));
}
BENCHMARK(BM_SolveWeights)->Arg(2)->Arg(3)->Arg(5)->Arg(8);

void BM_GridOracle(benchmark::State& state) {
  RandomStream rng(2);
  std::vector<ParamVector> momenta, noises;
  for (std::size_t k = 0; k < 3; ++k) {
    momenta.push_back(random_gradient(64, 1.0, rng.next_u64()));
    noises.push_back(random_gradient(64, 0.5, rng.next_u64()));
  }
  for (auto _ : state) benchmark::DoNotOptimize(solve_weights_grid(momenta, noises, 1e-2));
}
BENCHMARK(BM_GridOracle);

void BM_MgdaMinNorm(benchmark::State& state) {
  RandomStream rng(3);
  std::vector<ParamVector> g;
  for (int k = 0; k < state.range(0); ++k) g.push_back(random_gradient(1024, 1.0, rng.next_u64()));
  for (auto _ : state) benchmark::DoNotOptimize(mgda_min_norm_weights(g));
}
BENCHMARK(BM_MgdaMinNorm)->Arg(2)->Arg(5);

void BM_PcGrad(benchmark::State& state) {
  RandomStream rng(4);
  std::vector<ParamVector> g;
  for (int k = 0; k < state.range(0); ++k) g.push_back(random_gradient(1024, 1.0, rng.next_u64()));
  for (auto _ : state) benchmark::DoNotOptimize(pcgrad_combine(g, rng));
}
BENCHMARK(BM_PcGrad)->Arg(2)->Arg(5);

void BM_LossAndGrads(benchmark::State& state) {
  SyntheticTaskSpec spec;
  const Dataset data = generate(spec);
  const auto model = SharedEncoderModel::random(spec, 5);
  RandomStream rng(5);
  const MiniBatch batch = sample_batch(data, static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grads(model, data, batch, spec));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossAndGrads)->Arg(16)->Arg(128);

void BM_TrainRun(benchmark::State& state) {
  SyntheticTaskSpec spec;
  TrainConfig config;
  config.iterations = 500;
  config.eval_every = 100;
  config.strategy.kind = static_cast<StrategyKind>(state.range(0));
  state.SetLabel(std::string(to_string(config.strategy.kind)));
  for (auto _ : state) benchmark::DoNotOptimize(run(config, spec));
}
BENCHMARK(BM_TrainRun)->DenseRange(0, 6)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
