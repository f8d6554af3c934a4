// Serial reference vs OpenMP kernels. Thread count follows DLAB_THREADS.

#include <benchmark/benchmark.h>

#include <vector>

#include "dlab/kernels.hpp"
#include "dlab/rng.hpp"

namespace {

using namespace dlab;

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

template <auto Gemm>
void bm_gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const kernels::GemmShape s{n, n, n};
  const auto a = random_buffer(n * n, 1);
  const auto b = random_buffer(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    Gemm(s, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}

template <auto Standardize>
void bm_standardize(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 256;
  const auto x = random_buffer(rows * cols, 3);
  std::vector<double> y(rows * cols);
  for (auto _ : state) {
    Standardize(rows, cols, 1e-4, x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(bm_gemm<kernels::serial::gemm_nn>)->Name("gemm_nn/serial")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(bm_gemm<kernels::parallel::gemm_nn>)->Name("gemm_nn/parallel")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(bm_gemm<kernels::serial::gemm_tn>)->Name("gemm_tn/serial")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(bm_gemm<kernels::parallel::gemm_tn>)->Name("gemm_tn/parallel")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(bm_gemm<kernels::serial::gemm_nt>)->Name("gemm_nt/serial")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(bm_gemm<kernels::parallel::gemm_nt>)->Name("gemm_nt/parallel")->RangeMultiplier(2)->Range(64, 512);
BENCHMARK(bm_standardize<kernels::serial::column_standardize>)->Name("standardize/serial")->Range(128, 8192);
BENCHMARK(bm_standardize<kernels::parallel::column_standardize>)->Name("standardize/parallel")->Range(128, 8192);

int main(int argc, char** argv) {
  dlab::kernels::configure_threads();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
