// Serial reference loops against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <random>

#include "fexpo/functional.hpp"
#include "fexpo/kernel.hpp"
#include "fexpo/kernels.hpp"

using namespace fexpo;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, bool lower = false) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> z;
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      if (!lower || j <= i) m(i, j) = z(rng);
  return m;
}

Execution mode(const benchmark::State& s) { return s.range(1) ? Execution::parallel : Execution::serial; }

void BM_LowerTriangularMap(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t rows = 4096;
  const Matrix lower_t = random_matrix(n, n, true);
  const Matrix in = random_matrix(rows, n);
  Matrix out(rows, n + 1);
  for (auto _ : state) {
    kernels::lower_triangular_map(lower_t, in, out, mode(state));
    benchmark::DoNotOptimize(out.data().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows));
}

void BM_GatherMap(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t rows = 4096;
  const Matrix gather = random_matrix(n + 1, n + 1, true);
  const Matrix in = random_matrix(rows, n + 1);
  Matrix out(rows, n + 1);
  for (auto _ : state) {
    kernels::gather_map(gather, in, out, mode(state));
    benchmark::DoNotOptimize(out.data().data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows));
}

void BM_ExponentialRows(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix x = random_matrix(4096, n + 1);
  Matrix out(4096, n + 1);
  for (auto _ : state) {
    kernels::exponential_rows(x, 0.1, 1.0, 1.0 / n, out, mode(state));
    benchmark::DoNotOptimize(out.data().data());
  }
}

void BM_IntegratedWeights(benchmark::State& state) {
  const KernelEvaluator ev{HurstIndex(0.3)};
  const TimeGrid grid(1.0, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(integrated_kernel_weights(ev, grid, mode(state)));
}

void BM_DerivativeOperator(benchmark::State& state) {
  const KernelEvaluator ev{HurstIndex(0.7)};
  const TimeGrid grid(1.0, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(DerivativeOperator(ev, grid, mode(state)));
}

}  // namespace

BENCHMARK(BM_LowerTriangularMap)->ArgsProduct({{128, 512}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GatherMap)->ArgsProduct({{128, 512}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ExponentialRows)->ArgsProduct({{512}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_IntegratedWeights)->ArgsProduct({{64}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DerivativeOperator)->ArgsProduct({{64}, {0, 1}})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
