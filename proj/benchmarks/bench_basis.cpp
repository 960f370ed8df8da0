#include <benchmark/benchmark.h>

#include <random>

#include "flowstate/basis.hpp"

namespace {

void BM_SampleForecast(benchmark::State& state) {
  const long n = 24, K = 9;
  flowstate::ContinuousForecast fc;
  fc.basis = flowstate::BasisSpec::make(flowstate::BasisFamily::kLegendre, n);
  fc.coeffs = flowstate::Tensor(K, n);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (long i = 0; i < fc.coeffs.size(); ++i) fc.coeffs[i] = u(rng);
  fc.quantile_levels = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  fc.s_delta = 1.0 / static_cast<double>(state.range(0));
  fc.t_base = 24;

  for (auto _ : state) {
    flowstate::Tensor out = flowstate::sample_forecast(fc);
    benchmark::DoNotOptimize(out.v.data());
  }
}

}  // namespace

BENCHMARK(BM_SampleForecast)->Arg(1)->Arg(4)->Arg(16);
