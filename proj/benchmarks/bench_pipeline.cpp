#include <benchmark/benchmark.h>

#include "cosbal/balancer.hpp"
#include "cosbal/rng.hpp"
#include "cosbal/estimator.hpp"
#include "cosbal/simulator.hpp"

using namespace cosbal;

namespace {

void BM_GeneratePopulation(benchmark::State& state) {
  const auto m = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_base_population(5, m, 78));
  }
}

void BM_SimulationReplication(benchmark::State& state) {
  SimConfig cfg;
  cfg.overlap_c = 10.0;
  cfg.n_reps = 1;
  cfg.n_clusters = static_cast<int>(state.range(0));
  cfg.mean_cluster_size = 78;
  cfg.run_subset = state.range(1) != 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_study(cfg));
  }
}

void BM_FitBalancingWeights(benchmark::State& state) {
  const auto pop = generate_base_population(17, static_cast<int>(state.range(0)), 78);
  auto rng = substream(18, 0);
  const auto z = assign_treatment(pop, 10.0, rng);
  const auto out = generate_outcomes(pop, z, rng, 0.3, 12.0, 0.29);
  const auto ds = to_dataset(pop, z, out.y);
  const auto features = build_features(ds, {});
  BalanceSpec spec;
  spec.hyper = {0.29, 0.8, HyperSource::user_supplied, {}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit(ds, features, spec));
  }
}

}  // namespace

BENCHMARK(BM_GeneratePopulation)->Arg(44)->Arg(200)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_FitBalancingWeights)->Arg(44)->Arg(100)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SimulationReplication)->Args({44, 1})->Args({44, 0})->Args({100, 0})
    ->Unit(benchmark::kMillisecond);
