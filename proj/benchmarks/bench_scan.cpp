#include <benchmark/benchmark.h>

#include <random>

#include "flowstate/scan.hpp"

namespace {

void BM_ParallelScan(benchmark::State& state) {
  const long L = state.range(0);
  const long P = state.range(1);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> a_re(P), a_im(P);
  for (long p = 0; p < P; ++p) {
    a_re[p] = 0.9 * u(rng);
    a_im[p] = 0.9 * u(rng);
  }
  std::vector<double> b_re(L * P), b_im(L * P), s_re(L * P), s_im(L * P);
  for (auto& v : b_re) v = u(rng);
  for (auto& v : b_im) v = u(rng);
  for (auto _ : state) {
    flowstate::diag_scan_planar(a_re, a_im, b_re.data(), b_im.data(), L, P, s_re.data(),
                                s_im.data());
    benchmark::DoNotOptimize(s_re.data());
  }
  state.SetItemsProcessed(state.iterations() * L * P);
}

void BM_SequentialReference(benchmark::State& state) {
  const long L = state.range(0);
  const long P = state.range(1);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> a_re(P), a_im(P), b_re(L * P), b_im(L * P), s_re(L * P), s_im(L * P);
  for (auto& v : a_re) v = 0.9 * u(rng);
  for (auto& v : a_im) v = 0.9 * u(rng);
  for (auto& v : b_re) v = u(rng);
  for (auto& v : b_im) v = u(rng);
  for (auto _ : state) {
    for (long p = 0; p < P; ++p) {
      double sr = 0.0, si = 0.0;
      for (long t = 0; t < L; ++t) {
        const double nr = a_re[p] * sr - a_im[p] * si + b_re[t * P + p];
        si = a_re[p] * si + a_im[p] * sr + b_im[t * P + p];
        sr = nr;
        s_re[t * P + p] = sr;
        s_im[t * P + p] = si;
      }
    }
    benchmark::DoNotOptimize(s_re.data());
  }
  state.SetItemsProcessed(state.iterations() * L * P);
}

}  // namespace

BENCHMARK(BM_ParallelScan)->Args({256, 16})->Args({2048, 16})->Args({2048, 64});
BENCHMARK(BM_SequentialReference)->Args({256, 16})->Args({2048, 16})->Args({2048, 64});
