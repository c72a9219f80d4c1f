// Serial reference vs OpenMP paths for the hot kernels.

#include <benchmark/benchmark.h>

#include "ivdrf/crossfit.hpp"
#include "ivdrf/diagnostics.hpp"
#include "ivdrf/drf.hpp"
#include "ivdrf/llkr.hpp"
#include "ivdrf/sim.hpp"

using namespace ivdrf;

namespace {

const TargetInterval kInterval(0.25, 0.75);

const Dataset& data() {
  static const Dataset d = simulate_dgp({4000, 1, DgpVariant::paper_main});
  return d;
}

ExecPolicy policy_of(const benchmark::State& state) {
  return state.range(0) == 0 ? ExecPolicy::serial : ExecPolicy::parallel;
}

void BM_CrossfitScores(benchmark::State& state) {
  const auto pi = oracle_weighting({OracleWeighting::Kind::true_density, 0.5});
  CrossfitConfig cfg;
  cfg.seed = 3;
  cfg.emp_cap = 200;
  cfg.policy = policy_of(state);
  cfg.reference_scores = state.range(1) != 0;
  cfg.nuisance_override = [](const Dataset&, std::size_t) {
    return std::make_shared<PaperDgpOracle>(OracleWeighting{OracleWeighting::Kind::true_density, 0.5});
  };
  for (auto _ : state) benchmark::DoNotOptimize(crossfit_scores(data(), pi, kInterval, cfg));
}
BENCHMARK(BM_CrossfitScores)->ArgNames({"parallel", "reference"})->Args({0, 1})->Args({0, 0})->Args({1, 0})
    ->Unit(benchmark::kMillisecond);

void BM_SelectBandwidth(benchmark::State& state) {
  const auto& d = data();
  const std::span<const double> a(d.a().data(), d.size()), y(d.y().data(), d.size());
  std::vector<double> grid;
  for (int k = 0; k < 51; ++k) grid.push_back(0.05 + 0.01 * k);
  for (auto _ : state)
    benchmark::DoNotOptimize(select_bandwidth(y, a, kInterval, grid, KernelId::epanechnikov,
                                              BandwidthObjective::loocv, policy_of(state)));
}
BENCHMARK(BM_SelectBandwidth)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_DrfLlkr(benchmark::State& state) {
  const auto& d = data();
  const std::span<const double> a(d.a().data(), d.size()), y(d.y().data(), d.size());
  DrfConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(estimate_drf_llkr(y, a, kInterval, cfg, policy_of(state)));
}
BENCHMARK(BM_DrfLlkr)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_RelevanceDensity(benchmark::State& state) {
  const auto& d = data();
  const std::vector<double> a{-0.5, 0.0, 0.5};
  RelevanceConfig cfg;
  cfg.policy = policy_of(state);
  const auto grid = quantile_l_grid(d, 5);
  for (auto _ : state) benchmark::DoNotOptimize(chi2_divergence_curve(d, a, grid, cfg));
}
BENCHMARK(BM_RelevanceDensity)->ArgName("parallel")->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
