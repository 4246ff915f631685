#include <benchmark/benchmark.h>

#include <vector>

#include "r2t/kernels.hpp"
#include "r2t/rng.hpp"

using namespace r2t;
using kernels::Trans;

namespace {

std::vector<float> random_floats(size_t n, uint64_t seed) {
  CounterRng rng(derive_key(Stream::kTest, {seed}));
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform() * 2 - 1);
  return v;
}

// Shapes from the model: attention scores, the FFN and the widest conv layer.
template <bool kFast>
void bm_gemm(benchmark::State& state) {
  const int m = state.range(0), n = state.range(1), k = state.range(2);
  const auto a = random_floats(static_cast<size_t>(m) * k, 1), b = random_floats(static_cast<size_t>(k) * n, 2);
  std::vector<float> c(static_cast<size_t>(m) * n);
  for (auto _ : state) {
    if constexpr (kFast)
      kernels::gemm<float>(Trans::kNo, Trans::kYes, m, n, k, a.data(), b.data(), c.data(), false);
    else
      kernels::reference::gemm<float>(Trans::kNo, Trans::kYes, m, n, k, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2L * m * n * k);
}

template <bool kFast>
void bm_im2col(benchmark::State& state) {
  const int ch = state.range(0), hw = state.range(1);
  const int out = (hw + 2 - 3) / 2 + 1;
  const auto x = random_floats(static_cast<size_t>(ch) * hw * hw, 3);
  std::vector<float> col(static_cast<size_t>(ch) * 9 * out * out);
  for (auto _ : state) {
    if constexpr (kFast)
      kernels::im2col<float>(x.data(), ch, hw, hw, 3, 2, 1, out, out, col.data());
    else
      kernels::reference::im2col<float>(x.data(), ch, hw, hw, 3, 2, 1, out, out, col.data());
    benchmark::DoNotOptimize(col.data());
  }
}

template <bool kFast>
void bm_col2im(benchmark::State& state) {
  const int ch = state.range(0), hw = state.range(1);
  const int out = (hw + 2 - 3) / 2 + 1;
  const auto col = random_floats(static_cast<size_t>(ch) * 9 * out * out, 4);
  std::vector<float> x(static_cast<size_t>(ch) * hw * hw);
  for (auto _ : state) {
    if constexpr (kFast)
      kernels::col2im<float>(col.data(), ch, hw, hw, 3, 2, 1, out, out, x.data());
    else
      kernels::reference::col2im<float>(col.data(), ch, hw, hw, 3, 2, 1, out, out, x.data());
    benchmark::DoNotOptimize(x.data());
  }
}

void gemm_shapes(benchmark::internal::Benchmark* b) {
  b->Args({64, 193, 32})->Args({64, 128, 32})->Args({32, 1024, 72})->Args({64, 64, 256});
}

void conv_shapes(benchmark::internal::Benchmark* b) { b->Args({2, 64})->Args({8, 32})->Args({16, 16}); }

}  // namespace

BENCHMARK(bm_gemm<true>)->Name("gemm/omp")->Apply(gemm_shapes);
BENCHMARK(bm_gemm<false>)->Name("gemm/reference")->Apply(gemm_shapes);
BENCHMARK(bm_im2col<true>)->Name("im2col/omp")->Apply(conv_shapes);
BENCHMARK(bm_im2col<false>)->Name("im2col/reference")->Apply(conv_shapes);
BENCHMARK(bm_col2im<true>)->Name("col2im/omp")->Apply(conv_shapes);
BENCHMARK(bm_col2im<false>)->Name("col2im/reference")->Apply(conv_shapes);

BENCHMARK_MAIN();
