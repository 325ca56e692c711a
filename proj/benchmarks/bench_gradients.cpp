#include <benchmark/benchmark.h>

#include <memory>

#include "lhmc/models.hpp"
#include "lhmc/random.hpp"
#include "lhmc/simgen.hpp"

namespace lhmc {
namespace {

std::vector<double> jitter(std::size_t n) {
  Rng rng(1);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.uniform(-1, 1);
  return x;
}

void run(benchmark::State& state, const Model& model) {
  const auto x = jitter(model.dimension());
  std::vector<double> g(x.size());
  for (auto _ : state) benchmark::DoNotOptimize(model.log_density_gradient(x, g));
  state.counters["dim"] = static_cast<double>(model.dimension());
}

void BM_LdaGradient(benchmark::State& state) {
  const auto sim = simulate_lda(1);
  auto corpus = std::make_shared<const DocumentTermMatrix>(sim.corpus);
  const auto model = make_model(ModelSpec::defaults(ModelFamily::Lda, 5), Dataset{corpus, nullptr, nullptr});
  run(state, *model);
}
BENCHMARK(BM_LdaGradient)->Unit(benchmark::kMicrosecond);

void BM_StmGradient(benchmark::State& state) {
  const auto sim = simulate_stm(1);
  auto corpus = std::make_shared<const DocumentTermMatrix>(sim.corpus);
  auto cov = std::make_shared<const CovariateSet>(sim.covariates);
  const auto model = make_model(ModelSpec::defaults(ModelFamily::Stm), Dataset{corpus, cov, nullptr});
  run(state, *model);
}
BENCHMARK(BM_StmGradient)->Unit(benchmark::kMicrosecond);

void BM_DsrGradient(benchmark::State& state) {
  const auto sim = simulate_dsr(1, static_cast<double>(state.range(0)) / 1000.0);
  auto panel = std::make_shared<const SurveyPanel>(sim.panel);
  const auto model = make_model(ModelSpec::defaults(ModelFamily::Dsr), Dataset{nullptr, nullptr, panel});
  run(state, *model);
  state.counters["responses"] = static_cast<double>(sim.panel.responses());
}
BENCHMARK(BM_DsrGradient)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_SupervisedGradient(benchmark::State& state) {
  const auto sim = simulate_slda(1);
  auto corpus = std::make_shared<const DocumentTermMatrix>(sim.corpus);
  auto cov = std::make_shared<const CovariateSet>(sim.covariates);
  const auto model = make_model(ModelSpec::defaults(ModelFamily::Sslda), Dataset{corpus, cov, nullptr});
  run(state, *model);
}
BENCHMARK(BM_SupervisedGradient)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace lhmc

BENCHMARK_MAIN();
