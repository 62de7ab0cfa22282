// Serial reference kernels against their OpenMP counterparts.

#include "qeadapt/acoustic_model.hpp"
#include "qeadapt/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

namespace k = qea::kernels;

namespace {

std::vector<double> random_block(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double &x : v)
    x = d(rng);
  return v;
}

// frames x hidden x input, the shape of a forward pass through a hidden layer
using GemmFn = void (*)(std::span<const double>, std::span<const double>, std::span<double>, std::size_t, std::size_t,
                       std::size_t, bool);
using SoftmaxFn = void (*)(std::span<double>, std::size_t, std::size_t);

void BM_gemm_abt(benchmark::State &state, GemmFn gemm) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto kk = static_cast<std::size_t>(state.range(2));
  const auto a = random_block(m * kk, 1), b = random_block(n * kk, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    gemm(a, b, c, m, n, kk, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m * n * kk));
}

void BM_gemm_atb(benchmark::State &state, GemmFn gemm) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto kk = static_cast<std::size_t>(state.range(2));
  const auto a = random_block(m * n, 1), b = random_block(m * kk, 2);
  std::vector<double> c(n * kk);
  for (auto _ : state) {
    gemm(a, b, c, m, n, kk, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m * n * kk));
}

void BM_softmax(benchmark::State &state, SoftmaxFn softmax) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto src = random_block(m * n, 3);
  std::vector<double> x(src.size());
  for (auto _ : state) {
    x = src;
    softmax(x, m, n);
    benchmark::DoNotOptimize(x.data());
  }
}

void BM_forward(benchmark::State &state) {
  qea::Layout l;
  l.hidden = {static_cast<int>(state.range(0)), static_cast<int>(state.range(0))};
  l.outputs = 120;
  const auto model = qea::init_model(1, l);
  qea::Matrix frames(static_cast<std::size_t>(state.range(1)), static_cast<std::size_t>(l.feature_dim));
  frames.data = random_block(frames.data.size(), 4);
  for (auto _ : state)
    benchmark::DoNotOptimize(qea::forward(model, frames).data.data());
}

void gemm_shapes(benchmark::internal::Benchmark *b) {
  b->Args({256, 64, 40})->Args({1024, 64, 40})->Args({1024, 256, 200})->Args({4096, 256, 256});
}

void softmax_shapes(benchmark::internal::Benchmark *b) { b->Args({256, 120})->Args({4096, 120})->Args({4096, 600}); }

} // namespace

BENCHMARK_CAPTURE(BM_gemm_abt, serial, &k::reference::gemm_abt)->Apply(gemm_shapes);
BENCHMARK_CAPTURE(BM_gemm_abt, openmp, &k::gemm_abt)->Apply(gemm_shapes);
BENCHMARK_CAPTURE(BM_gemm_atb, serial, &k::reference::gemm_atb)->Apply(gemm_shapes);
BENCHMARK_CAPTURE(BM_gemm_atb, openmp, &k::gemm_atb)->Apply(gemm_shapes);
BENCHMARK_CAPTURE(BM_softmax, serial, &k::reference::softmax_rows)->Apply(softmax_shapes);
BENCHMARK_CAPTURE(BM_softmax, openmp, &k::softmax_rows)->Apply(softmax_shapes);
BENCHMARK(BM_forward)->Args({64, 1000})->Args({256, 1000});

BENCHMARK_MAIN();
