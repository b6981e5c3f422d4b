#include <benchmark/benchmark.h>

#include "creep/ops.hpp"

namespace {

using creep::SeededRng;
using creep::Tensor;
using creep::uniform;

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(1);
  const auto a = uniform<float>({n, n}, -1, 1, rng);
  const auto b = uniform<float>({n, n}, -1, 1, rng);
  creep::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(creep::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_LstmSequence(benchmark::State& state) {
  const auto length = static_cast<std::size_t>(state.range(0));
  SeededRng rng(2);
  const auto x = uniform<float>({1, length, 3}, 0, 1, rng);
  const auto w_ih = uniform<float>({3, 128}, -0.2, 0.2, rng);
  const auto w_hh = uniform<float>({32, 128}, -0.2, 0.2, rng);
  const auto b = Tensor<float>({128});
  creep::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(creep::lstm_sequence(x, w_ih, w_hh, b, b, false));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(length));
}
BENCHMARK(BM_LstmSequence)->Arg(500)->Arg(2000);

void BM_LstmSequenceBackward(benchmark::State& state) {
  const auto length = static_cast<std::size_t>(state.range(0));
  SeededRng rng(3);
  const auto x = uniform<float>({4, length, 3}, 0, 1, rng);
  auto w_ih = uniform<float>({3, 128}, -0.2, 0.2, rng).set_requires_grad();
  auto w_hh = uniform<float>({32, 128}, -0.2, 0.2, rng).set_requires_grad();
  auto b = Tensor<float>({128}).set_requires_grad();
  for (auto _ : state) {
    const auto loss = creep::mean(creep::lstm_sequence(x, w_ih, w_hh, b, b, false));
    benchmark::DoNotOptimize(creep::gradients(loss, {w_ih, w_hh, b}));
  }
}
BENCHMARK(BM_LstmSequenceBackward)->Arg(500);

void BM_Attention(benchmark::State& state) {
  const auto length = static_cast<std::size_t>(state.range(0));
  const auto block = static_cast<std::size_t>(state.range(1));
  SeededRng rng(4);
  const auto q = uniform<float>({1, length, 64}, -1, 1, rng);
  const auto k = uniform<float>({1, length, 64}, -1, 1, rng);
  const auto v = uniform<float>({1, length, 64}, -1, 1, rng);
  creep::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(creep::attention(q, k, v, 4, block));
}
BENCHMARK(BM_Attention)->Args({500, 512})->Args({2000, 512})->Args({2000, 64})->Unit(benchmark::kMillisecond);

void BM_Softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(5);
  const auto x = uniform<float>({n, n}, -5, 5, rng);
  creep::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(creep::softmax(x, -1));
}
BENCHMARK(BM_Softmax)->Arg(256)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
