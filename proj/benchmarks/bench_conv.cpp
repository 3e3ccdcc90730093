#include <benchmark/benchmark.h>

#include "aircast/autodiff.hpp"
#include "aircast/parallel.hpp"

using namespace aircast;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_uniform(-1.0, 1.0);
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto channels = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  Tensor x = random_tensor({batch, 20, 20, channels}, rng);
  Tensor k = random_tensor({3, 3, channels, 4 * channels}, rng);
  Graph g(false);
  Var xv = g.leaf(x, false);
  Var kv = g.leaf(k, false);
  for (auto _ : state) {
    Var y = conv2d(g, xv, kv, nullptr);
    benchmark::DoNotOptimize(y->value.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch) * 400 * 9 *
                          static_cast<std::int64_t>(channels * 4 * channels));
}
BENCHMARK(BM_Conv2dForward)->Args({1, 8})->Args({20, 8})->Args({20, 16});

void BM_Conv2dTrainStep(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Tensor x = random_tensor({batch, 20, 20, 8}, rng);
  Tensor k = random_tensor({3, 3, 8, 32}, rng);
  Tensor b = random_tensor({32}, rng);
  Tensor w = random_tensor({batch, 20, 20, 32}, rng);
  for (auto _ : state) {
    Graph g(true);
    Var kv = g.leaf(k);
    Var bv = g.leaf(b);
    Var y = conv2d(g, g.constant(x), kv, bv);
    Var loss = sum_all(g, mul(g, y, g.constant(w)));
    g.backward(loss);
    benchmark::DoNotOptimize(kv->grad.data());
  }
}
BENCHMARK(BM_Conv2dTrainStep)->Arg(1)->Arg(20);

void BM_ConvLstmStep(benchmark::State& state) {
  const auto f = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  Tensor x = random_tensor({20, 20, 20, 8}, rng);
  Tensor h = random_tensor({20, 20, 20, f}, rng);
  Tensor c = random_tensor({20, 20, 20, f}, rng);
  Tensor w = random_tensor({3, 3, 8, 4 * f}, rng);
  Tensor u = random_tensor({3, 3, f, 4 * f}, rng);
  Tensor b = random_tensor({4 * f}, rng);
  Graph g(false);
  ConvLstmVars vars{g.leaf(w, false), g.leaf(u, false), g.leaf(b, false)};
  Var xv = g.leaf(x, false);
  Var hv = g.leaf(h, false);
  Var cv = g.leaf(c, false);
  for (auto _ : state) {
    auto step = convlstm_step(g, xv, hv, cv, vars);
    benchmark::DoNotOptimize(step.first->value.data());
  }
}
BENCHMARK(BM_ConvLstmStep)->Arg(8)->Arg(16);

}  // namespace
