#include <benchmark/benchmark.h>

#include "exnet/model.hpp"
#include "exnet/nn.hpp"
#include "exnet/rng.hpp"

namespace {

exnet::Tensor<float> random_batch(exnet::Shape shape, std::uint64_t seed) {
  exnet::Rng rng(seed);
  exnet::Tensor<float> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(rng.uniform());
  return t;
}

void BM_Conv1Forward(benchmark::State& state) {
  exnet::Conv2d<float> conv("conv1", 3, 9, 3);
  exnet::Rng rng(1);
  conv.init_he_uniform(rng);
  const auto x = random_batch({8, 3, 224, 224}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(conv.forward(x, exnet::Mode::train));
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_Conv1Forward)->Unit(benchmark::kMillisecond);

// range(0): batch size at 224x224.
void BM_ModelForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto model = exnet::Model<float>::build(exnet::ModelSpec{}, 3);
  model.set_mode(exnet::Mode::eval);
  const auto x = random_batch({n, 3, 224, 224}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_ModelForward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  auto model = exnet::Model<float>::build(exnet::ModelSpec{}, 5);
  const auto x = random_batch({8, 3, 224, 224}, 6);
  for (auto _ : state) {
    model.zero_grad();
    const auto logits = model.forward(x);
    model.backward(exnet::Tensor<float>(logits.shape(), 0.01f));
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
