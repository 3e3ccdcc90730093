#include <benchmark/benchmark.h>

#include "aircast/models.hpp"
#include "aircast/optimize.hpp"
#include "aircast/synth.hpp"

using namespace aircast;

namespace {

void BM_PlumeStep(benchmark::State& state) {
  PlumeConfig cfg = PlumeConfig::desk_default();
  cfg.steps = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto frames = simulate_plume(cfg);
    benchmark::DoNotOptimize(frames.back().values.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PlumeStep)->Arg(100)->Arg(600);

void BM_CrnnForward(benchmark::State& state) {
  CrnnConfig cfg;
  cfg.rows = cfg.cols = 20;
  cfg.t_in = 12;
  cfg.block_filters = static_cast<int>(state.range(0));
  cfg.penultimate_filters = cfg.block_filters + 2;
  auto model = build_crnn(cfg, 1);
  Rng rng(2);
  std::vector<Tensor> frames;
  for (int t = 0; t < 12; ++t) {
    Tensor f({20, 20});
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng.next_unit();
    frames.push_back(std::move(f));
  }
  for (auto _ : state) {
    Tensor pred = frame_predict(model, frames);
    benchmark::DoNotOptimize(pred.data());
  }
}
BENCHMARK(BM_CrnnForward)->Arg(8)->Arg(16);

void BM_CrnnTrainBatch(benchmark::State& state) {
  CrnnConfig cfg;
  cfg.rows = cfg.cols = 20;
  cfg.t_in = 12;
  cfg.block_filters = 8;
  cfg.penultimate_filters = 10;
  auto model = build_crnn(cfg, 1);
  Rng rng(3);
  std::vector<Tensor> frames;
  for (int t = 0; t < 40; ++t) {
    Tensor f({20, 20});
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = rng.next_unit();
    frames.push_back(std::move(f));
  }
  auto windows = make_frame_windows(frames, 12, 1);
  TrainConfig tc;
  tc.batch_size = static_cast<int>(state.range(0));
  tc.epochs = 1;
  for (auto _ : state) {
    auto copy = model;  // train mutates weights; keep the baseline fixed
    auto history = train_frame_model(copy, windows, {}, tc);
    benchmark::DoNotOptimize(history.data());
  }
}
BENCHMARK(BM_CrnnTrainBatch)->Arg(20)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
