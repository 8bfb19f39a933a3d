#include <benchmark/benchmark.h>

#include <vector>

#include "exnet/rng.hpp"
#include "exnet/tensor.hpp"

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  exnet::Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

// Square gemm; range(0) is the side.
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    exnet::kernels::gemm(a.data(), b.data(), c.data(), n, n, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Gemm)->Arg(64)->Arg(128)->Arg(256);

// Conv-2 shaped product: [18, 81] x [81, 109*109].
void BM_GemmConv2(benchmark::State& state) {
  const std::size_t m = 18, k = 81, n = 109 * 109;
  const auto a = random_vec(m * k, 3), b = random_vec(k * n, 4);
  std::vector<float> c(m * n);
  for (auto _ : state) {
    exnet::kernels::gemm(a.data(), b.data(), c.data(), m, k, n);
    benchmark::DoNotOptimize(c.data());
  }
}
BENCHMARK(BM_GemmConv2);

void BM_Im2col(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const exnet::Window win{};
  const auto [ho, wo] = exnet::window_output(side, side, win);
  const auto image = random_vec(3 * side * side, 5);
  std::vector<float> cols(3 * 9 * ho * wo);
  for (auto _ : state) {
    exnet::kernels::im2col(image.data(), cols.data(), 3, side, side, win);
    benchmark::DoNotOptimize(cols.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<std::int64_t>(cols.size() * sizeof(float)));
}
BENCHMARK(BM_Im2col)->Arg(56)->Arg(224);

void BM_Col2im(benchmark::State& state) {
  const std::size_t side = 224;
  const exnet::Window win{};
  const auto [ho, wo] = exnet::window_output(side, side, win);
  const auto cols = random_vec(3 * 9 * ho * wo, 6);
  std::vector<float> image(3 * side * side);
  for (auto _ : state) {
    std::fill(image.begin(), image.end(), 0.0f);
    exnet::kernels::col2im(cols.data(), image.data(), 3, side, side, win);
    benchmark::DoNotOptimize(image.data());
  }
}
BENCHMARK(BM_Col2im);

}  // namespace
