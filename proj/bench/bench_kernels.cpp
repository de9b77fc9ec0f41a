// Serial reference vs OpenMP kernels on training-sized shapes.

#include <benchmark/benchmark.h>

#include <random>

#include "bake/bake.hpp"
#include "bake/kernels.hpp"

namespace {

bake::Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  bake::Tensor t(rows, cols);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

void BM_MatmulSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor(n, 256, 1);
  const auto b = random_tensor(256, 128, 2);
  for (auto _ : state) benchmark::DoNotOptimize(bake::kernels::serial::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 256 * 128));
}

void BM_MatmulParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor(n, 256, 1);
  const auto b = random_tensor(256, 128, 2);
  for (auto _ : state) benchmark::DoNotOptimize(bake::kernels::parallel::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * 256 * 128));
}

void BM_SoftmaxSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor(n, n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(bake::kernels::serial::softmax_rows(x, {}));
}

void BM_SoftmaxParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor(n, n, 3);
  for (auto _ : state) benchmark::DoNotOptimize(bake::kernels::parallel::softmax_rows(x, {}));
}

void BM_Conv2dSerial(benchmark::State& state) {
  const bake::kernels::ConvShape shape{{3, 32, 32}, 16, 3, 1};
  const auto x = random_tensor(static_cast<std::size_t>(state.range(0)), shape.in.size(), 4);
  const auto w = random_tensor(16, 27, 5);
  const bake::Tensor bias(1, 16);
  for (auto _ : state) benchmark::DoNotOptimize(bake::kernels::serial::conv2d(x, w, bias, shape));
}

void BM_Conv2dParallel(benchmark::State& state) {
  const bake::kernels::ConvShape shape{{3, 32, 32}, 16, 3, 1};
  const auto x = random_tensor(static_cast<std::size_t>(state.range(0)), shape.in.size(), 4);
  const auto w = random_tensor(16, 27, 5);
  const bake::Tensor bias(1, 16);
  for (auto _ : state) benchmark::DoNotOptimize(bake::kernels::parallel::conv2d(x, w, bias, shape));
}

// End-to-end target construction, the per-iteration overhead BAKE adds.
void BM_BuildSoftTargets(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto f = random_tensor(n, 128, 6);
  const auto z = random_tensor(n, 10, 7);
  const bake::BakeConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(bake::build_soft_targets(f, z, std::nullopt, cfg));
}

}  // namespace

BENCHMARK(BM_MatmulSerial)->Arg(128)->Arg(512);
BENCHMARK(BM_MatmulParallel)->Arg(128)->Arg(512);
BENCHMARK(BM_SoftmaxSerial)->Arg(256)->Arg(1024);
BENCHMARK(BM_SoftmaxParallel)->Arg(256)->Arg(1024);
BENCHMARK(BM_Conv2dSerial)->Arg(32);
BENCHMARK(BM_Conv2dParallel)->Arg(32);
BENCHMARK(BM_BuildSoftTargets)->Arg(128)->Arg(256)->Arg(512);

BENCHMARK_MAIN();
