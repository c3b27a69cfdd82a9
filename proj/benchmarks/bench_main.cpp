#include <numbers>
#include <numeric>

#include <benchmark/benchmark.h>

#include "bpgrad/nn.hpp"
#include "bpgrad/pruning.hpp"
#include "bpgrad/solver.hpp"

using namespace bpgrad;

namespace {

void BM_FeasibleIntervals(benchmark::State& state) {
  const auto f3 = make_f3();
  History h;
  Rng rng(1);
  for (std::int64_t i = 0; i < state.range(0); ++i) {
    const double x = rng.uniform(0.0, 4.0 * std::numbers::pi);
    h.append({ParamVector{x}, f3.at(x), std::nullopt, static_cast<std::size_t>(i + 1)});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(feasible_intervals_1d(h, f3.domain(), 0.1, 4.0 * std::numbers::pi));
  }
}
BENCHMARK(BM_FeasibleIntervals)->Arg(16)->Arg(256)->Arg(4096);

void BM_ExactF3(benchmark::State& state) {
  const auto f3 = make_f3();
  SolverConfig cfg;
  cfg.lipschitz_L = 4.0 * std::numbers::pi;
  cfg.rho = 0.1;
  cfg.max_outer_iters = 1;
  for (auto _ : state) benchmark::DoNotOptimize(run_exact_bpgrad(f3, cfg, ParamVector{2.5}));
}
BENCHMARK(BM_ExactF3);

void BM_LossAndGrad(benchmark::State& state) {
  const Dataset d = make_gaussian_classification(2000, 100, 2, 1);
  const MlpObjective obj(make_mlp({100, 100, 2}), d, 5e-4);
  const ParamVector x = init_gaussian({100, 100, 2}, 0.05, 3).flatten();
  std::vector<std::size_t> batch(static_cast<std::size_t>(state.range(0)));
  std::iota(batch.begin(), batch.end(), std::size_t{0});
  ParamVector g;
  for (auto _ : state) benchmark::DoNotOptimize(obj.loss_and_grad(x, batch, g));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LossAndGrad)->Arg(1)->Arg(200);

void BM_BpgradStep(benchmark::State& state) {
  const std::size_t dim = static_cast<std::size_t>(state.range(0));
  SolverConfig cfg;
  cfg.lipschitz_L = 15.0;
  Rng rng(2);
  ParamVector g = ParamVector::zeros(dim);
  for (std::size_t k = 0; k < dim; ++k) g[k] = rng.normal();
  SolverState s = SolverState::start(ParamVector::zeros(dim));
  for (auto _ : state) {
    s = bpgrad_step(std::move(s), 1.0, g, cfg, rng);
    benchmark::DoNotOptimize(s.position);
  }
}
BENCHMARK(BM_BpgradStep)->Arg(10302);

}  // namespace
BENCHMARK_MAIN();
