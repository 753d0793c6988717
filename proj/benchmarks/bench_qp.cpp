#include <benchmark/benchmark.h>

#include <random>

#include "cosbal/qp.hpp"

using namespace cosbal;

namespace {

QpProblem make_problem(Eigen::Index n, Eigen::Index d, int clusters) {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> normal(0.0, 1.0);
  QpProblem qp;
  qp.m.resize(d, n);
  for (auto& v : qp.m.reshaped()) v = normal(rng);
  qp.t.resize(d);
  for (auto& v : qp.t) v = normal(rng);
  Eigen::Index pos = 0;
  for (int b = 0; b < clusters; ++b) {
    const Eigen::Index len =
        b + 1 == clusters ? n - pos
                          : std::max<Eigen::Index>(1, n / clusters);
    qp.penalty.blocks.push_back({pos, pos + len, 0.7e-4, 0.3e-4});
    pos += len;
  }
  qp.sum_constraints.push_back({0, n, 0.4 * static_cast<double>(n), {}});
  return qp;
}

void BM_SolveUnitProblem(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const auto qp = make_problem(n, 14, static_cast<int>(n / 60) + 2);
  SolverOptions opts;
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve(qp, opts));
  }
  state.SetItemsProcessed(state.iterations() * n);
}

void BM_ProjectFeasible(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (auto& x : v) x = normal(rng);
  std::vector<SumConstraint> cons{{0, n, 0.4 * static_cast<double>(n), {}}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        project_feasible(v, cons, 0.0, std::numeric_limits<double>::infinity()));
  }
  state.SetItemsProcessed(state.iterations() * n);
}

}  // namespace

BENCHMARK(BM_SolveUnitProblem)->Arg(200)->Arg(1000)->Arg(4000)
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ProjectFeasible)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
