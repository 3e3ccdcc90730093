#include <benchmark/benchmark.h>

#include "aircast/grid.hpp"

using namespace aircast;

namespace {

void BM_VoronoiWeights(benchmark::State& state) {
  GridSpec grid;  // 40x40 default box
  Rng rng(7);
  std::vector<GeoPoint> nodes;
  for (int i = 0; i < state.range(0); ++i)
    nodes.push_back({rng.next_uniform(grid.lat_min, grid.lat_max),
                     rng.next_uniform(grid.lon_min, grid.lon_max)});
  const int subsamples = static_cast<int>(state.range(1));
  for (auto _ : state) {
    auto weights = compute_voronoi_weights(nodes, grid, subsamples);
    benchmark::DoNotOptimize(weights.sectors.data());
  }
}
BENCHMARK(BM_VoronoiWeights)->Args({10, 32})->Args({20, 32})->Args({10, 256});

void BM_RasterizeFrame(benchmark::State& state) {
  GridSpec grid;
  Rng rng(8);
  std::vector<GeoPoint> nodes;
  for (int i = 0; i < 20; ++i)
    nodes.push_back({rng.next_uniform(grid.lat_min, grid.lat_max),
                     rng.next_uniform(grid.lon_min, grid.lon_max)});
  auto weights = compute_voronoi_weights(nodes, grid, 32);
  std::vector<std::optional<double>> readings;
  for (std::size_t i = 0; i < weights.nodes.size(); ++i)
    readings.push_back(rng.next_uniform(0.0, 100.0));
  for (auto _ : state) {
    auto frame = rasterize_frame(readings, weights);
    benchmark::DoNotOptimize(frame.values.data());
  }
}
BENCHMARK(BM_RasterizeFrame);

}  // namespace
