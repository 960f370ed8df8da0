#include <benchmark/benchmark.h>

#include <cmath>

#include "flowstate/model.hpp"

namespace {

void BM_EncodeForward(benchmark::State& state) {
  flowstate::ModelConfig cfg;
  cfg.encoder.num_layers = 2;
  cfg.encoder.state_size = 16;
  cfg.encoder.hidden_size = 24;
  cfg.encoder.context_length = state.range(0);
  cfg.encoder.min_context = 20;
  cfg.basis_n = 24;
  const flowstate::StackParams params = flowstate::init_stack(cfg, 1);

  flowstate::Tensor input(cfg.encoder.context_length, 2);
  for (long t = 0; t < input.rows; ++t) input.at(t, 0) = std::sin(0.26 * t);

  for (auto _ : state) {
    flowstate::Tensor out = flowstate::encode(input, cfg, params, 1.0);
    benchmark::DoNotOptimize(out.v.data());
  }
  state.SetItemsProcessed(state.iterations() * cfg.encoder.context_length);
}

}  // namespace

BENCHMARK(BM_EncodeForward)->Arg(256)->Arg(1024)->Arg(2048);
