// Serial reference versus OpenMP kernels at the sizes a desk training run hits.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "rbcssl/kernels.hpp"

namespace k = rbc::kernels;

namespace {

std::vector<float> noise(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<float> dist;
  std::vector<float> v(n);
  for (auto& x : v) x = dist(gen);
  return v;
}

template <bool Parallel>
void gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const k::GemmShape s{n, n, n};
  const auto a = noise(n * n, 1), b = noise(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::gemm<float>(s, a, b, c, false);
    else k::serial::gemm<float>(s, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

// Attention-shaped: batch·heads blocks of [tokens, head_dim] x [head_dim, tokens].
template <bool Parallel>
void gemm_batched(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const k::GemmShape s{17, 17, 16, false, true};
  const auto a = noise(batch * 17 * 16, 3), b = noise(batch * 17 * 16, 4);
  std::vector<float> c(batch * 17 * 17);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::gemm_batched<float>(batch, s, a, b, c, false);
    else k::serial::gemm_batched<float>(batch, s, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
}

template <bool Parallel>
void softmax(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 256;
  const auto x = noise(rows * cols, 5);
  std::vector<float> y(x.size());
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::softmax_rows<float>(x, y, cols, 10.0f);
    else k::serial::softmax_rows<float>(x, y, cols, 10.0f);
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void layernorm(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t cols = 64;
  const auto x = noise(rows * cols, 6);
  std::vector<float> xhat(x.size()), inv(rows);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::layernorm_rows<float>(x, xhat, inv, cols, 1e-6f);
    else k::serial::layernorm_rows<float>(x, xhat, inv, cols, 1e-6f);
    benchmark::DoNotOptimize(xhat.data());
  }
}

template <bool Parallel>
void gelu(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = noise(n, 7);
  std::vector<float> y(n);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::gelu<float>(x, y);
    else k::serial::gelu<float>(x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(gemm_batched<false>)->Name("gemm_batched/serial")->Arg(128)->Arg(1024);
BENCHMARK(gemm_batched<true>)->Name("gemm_batched/parallel")->Arg(128)->Arg(1024);
BENCHMARK(softmax<false>)->Name("softmax_rows/serial")->Arg(64)->Arg(2048);
BENCHMARK(softmax<true>)->Name("softmax_rows/parallel")->Arg(64)->Arg(2048);
BENCHMARK(layernorm<false>)->Name("layernorm_rows/serial")->Arg(544)->Arg(8704);
BENCHMARK(layernorm<true>)->Name("layernorm_rows/parallel")->Arg(544)->Arg(8704);
BENCHMARK(gelu<false>)->Name("gelu/serial")->Arg(1 << 16)->Arg(1 << 20);
BENCHMARK(gelu<true>)->Name("gelu/parallel")->Arg(1 << 16)->Arg(1 << 20);

BENCHMARK_MAIN();
