#pragma once

#include <cstdint>
#include <vector>

#include "aircast/common.hpp"
#include "aircast/grid.hpp"
#include "aircast/ingest.hpp"

namespace aircast {

/// Point emitter with a diurnal on/off schedule (hours within a 24 h cycle).
struct PlumeSource {
  double lat = 0.0;
  double lon = 0.0;
  double rate = 100.0;  // µg/m³ per step into the host cell
  double on_hour = 0.0;
  double off_hour = 24.0;
};

enum class Boundary { Periodic, Outflow };

// Desk-scale ground truth: a 2-D advection-diffusion field on the sector
// grid. Explicit first-order upwind advection in flux form plus a 5-point
// diffusion stencil; conservative under periodic boundaries, which the tests
// use as an oracle.
struct PlumeConfig {
  GridSpec grid{23.90, 24.45, 120.37, 121.020, 20, 20};
  int steps = 600;
  double dt = 1.0;               // time units per step
  double diffusion = 0.04;       // cell^2 per time unit
  double wind_u = 0.5;           // cells per time unit, +u blows west->east
  double wind_v = 0.15;          // +v blows south->north
  double wind_rotate_steps = 0;  // steps per full wind rotation; 0 = constant
  std::vector<PlumeSource> sources;
  Boundary boundary = Boundary::Outflow;
  double background = 4.0;  // initial uniform field value
  std::int64_t seconds_per_step = 7200;
  std::uint64_t seed = 0;

  /// Two diurnal sources and a slowly rotating wind; learnable in minutes.
  static PlumeConfig desk_default();
};

// Raw (denormalized) frames, one per step, bucket = step index.
// Throws DataError naming the violated CFL bound when the explicit scheme
// would be unstable (max(|u|,|v|) dt > 1 or 4 D dt > 1).
std::vector<HeatMapFrame> simulate_plume(const PlumeConfig& config);

// Virtual sensor sweep over the frames: bilinear interpolation at each node
// position, Gaussian read noise (clamped at 0), records dropped with
// probability `dropout`. Node ids are n0, n1, ... in position order.
std::vector<SensorRecord> sample_sensors(const std::vector<HeatMapFrame>& frames,
                                         const GridSpec& grid,
                                         const std::vector<GeoPoint>& positions,
                                         double read_noise, double dropout,
                                         std::uint64_t seed,
                                         std::int64_t seconds_per_step = 7200);

/// H copies of the last observed frame: the no-skill reference forecast.
std::vector<Tensor> persistence_forecast(const Tensor& last_frame, int horizon);

/// One node position per sector center (full coverage for round-trip tests).
std::vector<GeoPoint> sector_center_positions(const GridSpec& grid);

/// `count` positions uniform over the grid box, seeded.
std::vector<GeoPoint> random_positions(const GridSpec& grid, std::size_t count,
                                       std::uint64_t seed);

}  // namespace aircast
