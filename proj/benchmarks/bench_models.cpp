#include <benchmark/benchmark.h>

#include "creep/latency.hpp"
#include "creep/models.hpp"
#include "creep/training.hpp"

namespace {

void BM_Predict(benchmark::State& state, creep::ModelKind kind) {
  const auto length = static_cast<std::size_t>(state.range(0));
  creep::SeededRng rng(42);
  const auto model = creep::make_model<float>(creep::ModelConfig::defaults(kind), rng);
  const auto x = creep::synthetic_sequence(length);
  for (auto _ : state) benchmark::DoNotOptimize(model->predict(x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(length));
}
BENCHMARK_CAPTURE(BM_Predict, baseline, creep::ModelKind::Baseline)
    ->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Predict, vae, creep::ModelKind::Vae)->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Predict, transformer, creep::ModelKind::Transformer)
    ->Arg(500)->Arg(2000)->Unit(benchmark::kMillisecond);

// One optimizer step on a batch of four sequences.
void BM_TrainStep(benchmark::State& state, creep::ModelKind kind) {
  const auto length = static_cast<std::size_t>(state.range(0));
  creep::SeededRng rng(42);
  const auto model = creep::make_model<float>(creep::ModelConfig::defaults(kind), rng);
  const auto x = creep::uniform<float>({4, length, 3}, 0, 1, rng);
  const auto y = creep::uniform<float>({4, length, 1}, 0, 1, rng);
  std::vector<creep::Tensor<float>> params;
  for (const auto& [name, t] : model->parameters()) params.push_back(t);
  creep::AdamState<float> adam;
  for (auto _ : state) {
    const auto loss = model->loss(x, y, true, rng, 1.0).total;
    const auto grads = creep::gradients(loss, params);
    creep::adam_step<float>(adam, params, grads);
  }
}
BENCHMARK_CAPTURE(BM_TrainStep, baseline, creep::ModelKind::Baseline)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainStep, vae, creep::ModelKind::Vae)->Arg(500)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TrainStep, transformer, creep::ModelKind::Transformer)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
