#include <benchmark/benchmark.h>

#include "lhmc/gibbs_lda.hpp"
#include "lhmc/samplers.hpp"
#include "lhmc/simgen.hpp"

namespace lhmc {
namespace {

void BM_GibbsSweep(benchmark::State& state) {
  const auto sim = simulate_lda(1);
  Rng rng(2);
  auto s = GibbsState::initialize(sim.corpus, static_cast<std::size_t>(state.range(0)), rng);
  for (auto _ : state) gibbs_sweep(s, 0.5, 0.1, rng);
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * s.tokens()));
}
BENCHMARK(BM_GibbsSweep)->Arg(2)->Arg(5)->Arg(20)->Unit(benchmark::kMicrosecond);

FunctionTarget gaussian(std::size_t n) {
  return FunctionTarget(n, [](std::span<const double> x, std::span<double> g) {
    double lp = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      lp -= 0.5 * x[i] * x[i];
      g[i] = -x[i];
    }
    return lp;
  });
}

void BM_NutsGaussian(benchmark::State& state) {
  const auto t = gaussian(static_cast<std::size_t>(state.range(0)));
  ChainConfig cfg;
  cfg.draws = 200;
  cfg.warmup = 200;
  cfg.jobs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(run_chains(t, cfg));
}
BENCHMARK(BM_NutsGaussian)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_Leapfrog(benchmark::State& state) {
  const auto t = gaussian(100);
  State s = make_state(t, std::vector<double>(100, 0.5));
  std::vector<double> r(100, 0.1), mass(100, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(leapfrog(t, s, r, 0.01, mass));
}
BENCHMARK(BM_Leapfrog);

}  // namespace
}  // namespace lhmc

BENCHMARK_MAIN();
