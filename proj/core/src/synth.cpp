#include "aircast/synth.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace aircast {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

std::size_t wrap(std::ptrdiff_t i, std::size_t n) {
  std::ptrdiff_t m = i % static_cast<std::ptrdiff_t>(n);
  if (m < 0) m += static_cast<std::ptrdiff_t>(n);
  return static_cast<std::size_t>(m);
}

}  // namespace

PlumeConfig PlumeConfig::desk_default() {
  PlumeConfig cfg;
  cfg.grid = GridSpec{23.90, 24.45, 120.37, 121.020, 20, 20};
  cfg.steps = 600;
  cfg.dt = 1.0;
  cfg.diffusion = 0.04;
  cfg.wind_u = 0.5;
  cfg.wind_v = 0.15;
  cfg.wind_rotate_steps = 96;  // one rotation per 8 days at 2 h steps
  cfg.boundary = Boundary::Outflow;
  cfg.background = 4.0;
  const double lat_third = cfg.grid.lat_min + (cfg.grid.lat_max - cfg.grid.lat_min) / 3.0;
  const double lat_two_thirds = cfg.grid.lat_min + 2.0 * (cfg.grid.lat_max - cfg.grid.lat_min) / 3.0;
  const double lon_third = cfg.grid.lon_min + (cfg.grid.lon_max - cfg.grid.lon_min) / 3.0;
  const double lon_two_thirds = cfg.grid.lon_min + 2.0 * (cfg.grid.lon_max - cfg.grid.lon_min) / 3.0;
  cfg.sources = {
      {lat_third, lon_third, 60.0, 6.0, 20.0},        // daytime emitter
      {lat_two_thirds, lon_two_thirds, 40.0, 0.0, 12.0},  // morning emitter
  };
  return cfg;
}

std::vector<HeatMapFrame> simulate_plume(const PlumeConfig& config) {
  config.grid.validate();
  if (config.steps < 1) throw DataError("simulate_plume: steps must be >= 1");
  if (config.dt <= 0.0) throw DataError("simulate_plume: dt must be positive");
  if (config.diffusion < 0.0) throw DataError("simulate_plume: diffusion must be >= 0");
  const double wind_mag = std::hypot(config.wind_u, config.wind_v);
  // rotation preserves magnitude, so checking it bounds every per-step component
  if (wind_mag * config.dt > 1.0 + 1e-12)
    throw DataError("simulate_plume: CFL violated: max(|u|,|v|)*dt = " +
                    std::to_string(wind_mag * config.dt) + " > 1 cell");
  if (config.diffusion * config.dt > 0.25 + 1e-12)
    throw DataError("simulate_plume: CFL violated: D*dt = " +
                    std::to_string(config.diffusion * config.dt) + " > 0.25 cell^2");

  const auto rows = static_cast<std::size_t>(config.grid.rows);
  const auto cols = static_cast<std::size_t>(config.grid.cols);
  const bool periodic = config.boundary == Boundary::Periodic;

  // source cells
  struct CellSource {
    std::size_t index;
    double rate;
    double on_hour, off_hour;
  };
  std::vector<CellSource> cell_sources;
  for (const auto& s : config.sources) {
    auto sector = sector_of(s.lat, s.lon, config.grid);
    if (!sector) throw DataError("simulate_plume: source outside the grid box");
    cell_sources.push_back({static_cast<std::size_t>(sector->row) * cols +
                                static_cast<std::size_t>(sector->col),
                            s.rate, s.on_hour, s.off_hour});
  }

  Tensor field({rows, cols}, config.background);
  Tensor next({rows, cols});
  std::vector<HeatMapFrame> frames;
  frames.reserve(static_cast<std::size_t>(config.steps));

  for (int step = 0; step < config.steps; ++step) {
    // per-step wind (optionally rotating)
    double u = config.wind_u;
    double v = config.wind_v;
    if (config.wind_rotate_steps > 0) {
      const double angle = kTwoPi * static_cast<double>(step) / config.wind_rotate_steps;
      u = config.wind_u * std::cos(angle) - config.wind_v * std::sin(angle);
      v = config.wind_u * std::sin(angle) + config.wind_v * std::cos(angle);
    }

    // donor-cell upwind advection in flux form: theta -= dt * div(flux)
    auto at = [&](std::ptrdiff_t r, std::ptrdiff_t c) -> double {
      if (periodic) return field[wrap(r, rows) * cols + wrap(c, cols)];
      if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(rows) ||
          c >= static_cast<std::ptrdiff_t>(cols))
        return 0.0;  // outflow: nothing enters from outside
      return field[static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)];
    };
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const auto ri = static_cast<std::ptrdiff_t>(r);
        const auto ci = static_cast<std::ptrdiff_t>(c);
        const double here = field[r * cols + c];
        // east-west faces (u > 0 blows toward +c)
        const double flux_e = u >= 0.0 ? u * here : u * at(ri, ci + 1);
        const double flux_w = u >= 0.0 ? u * at(ri, ci - 1) : u * here;
        // north-south faces (v > 0 blows toward +r)
        const double flux_n = v >= 0.0 ? v * here : v * at(ri + 1, ci);
        const double flux_s = v >= 0.0 ? v * at(ri - 1, ci) : v * here;
        double value = here - config.dt * ((flux_e - flux_w) + (flux_n - flux_s));
        // diffusion, 5-point stencil
        if (config.diffusion > 0.0) {
          double lap;
          if (periodic) {
            lap = at(ri + 1, ci) + at(ri - 1, ci) + at(ri, ci + 1) + at(ri, ci - 1) -
                  4.0 * here;
          } else {
            // zero-flux walls: mirror the cell itself at the boundary
            const double up = r + 1 < rows ? at(ri + 1, ci) : here;
            const double down = r > 0 ? at(ri - 1, ci) : here;
            const double right = c + 1 < cols ? at(ri, ci + 1) : here;
            const double left = c > 0 ? at(ri, ci - 1) : here;
            lap = up + down + right + left - 4.0 * here;
          }
          value += config.diffusion * config.dt * lap;
        }
        next[r * cols + c] = std::max(value, 0.0);
      }
    }

    // source injection
    const double hour =
        std::fmod(static_cast<double>(step) * static_cast<double>(config.seconds_per_step) /
                      3600.0,
                  24.0);
    for (const auto& s : cell_sources)
      if (hour >= s.on_hour && hour < s.off_hour) next[s.index] += s.rate * config.dt;

    std::swap(field, next);
    HeatMapFrame frame;
    frame.values = field;
    frame.bucket = step;
    frame.normalized = false;
    frames.push_back(std::move(frame));
  }
  return frames;
}

std::vector<SensorRecord> sample_sensors(const std::vector<HeatMapFrame>& frames,
                                         const GridSpec& grid,
                                         const std::vector<GeoPoint>& positions,
                                         double read_noise, double dropout,
                                         std::uint64_t seed, std::int64_t seconds_per_step) {
  grid.validate();
  if (read_noise < 0.0) throw DataError("sample_sensors: read noise must be >= 0");
  if (dropout < 0.0 || dropout > 1.0)
    throw DataError("sample_sensors: dropout must be in [0, 1]");
  for (const auto& p : positions)
    if (!grid.contains(p.lat, p.lon))
      throw DataError("sample_sensors: node position outside the grid box");

  const auto rows = static_cast<std::size_t>(grid.rows);
  const auto cols = static_cast<std::size_t>(grid.cols);
  Rng rng(seed);
  std::vector<SensorRecord> records;
  records.reserve(frames.size() * positions.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const Tensor& field = frames[t].values;
    for (std::size_t n = 0; n < positions.size(); ++n) {
      const bool drop = rng.next_unit() < dropout;
      const double noise = read_noise > 0.0 ? rng.next_gaussian() * read_noise : 0.0;
      if (drop) continue;  // rng consumed either way keeps streams aligned
      // bilinear interpolation on cell centers, clamped at the walls
      double rf = (positions[n].lat - grid.lat_min) / grid.dlat() - 0.5;
      double cf = (positions[n].lon - grid.lon_min) / grid.dlon() - 0.5;
      rf = std::clamp(rf, 0.0, static_cast<double>(rows - 1));
      cf = std::clamp(cf, 0.0, static_cast<double>(cols - 1));
      const auto r0 = static_cast<std::size_t>(rf);
      const auto c0 = static_cast<std::size_t>(cf);
      const std::size_t r1 = std::min(r0 + 1, rows - 1);
      const std::size_t c1 = std::min(c0 + 1, cols - 1);
      const double ar = rf - static_cast<double>(r0);
      const double ac = cf - static_cast<double>(c0);
      const double value = (1 - ar) * ((1 - ac) * field[r0 * cols + c0] +
                                       ac * field[r0 * cols + c1]) +
                           ar * ((1 - ac) * field[r1 * cols + c0] +
                                 ac * field[r1 * cols + c1]);
      SensorRecord rec;
      rec.node_id = "n" + std::to_string(n);
      rec.latitude = positions[n].lat;
      rec.longitude = positions[n].lon;
      rec.timestamp = frames[t].bucket * seconds_per_step;
      rec.pm25 = std::max(value + noise, 0.0);
      records.push_back(std::move(rec));
    }
  }
  return records;
}

std::vector<Tensor> persistence_forecast(const Tensor& last_frame, int horizon) {
  if (horizon < 1) throw DataError("persistence_forecast: horizon must be >= 1");
  return std::vector<Tensor>(static_cast<std::size_t>(horizon), last_frame);
}

std::vector<GeoPoint> sector_center_positions(const GridSpec& grid) {
  grid.validate();
  std::vector<GeoPoint> points;
  points.reserve(static_cast<std::size_t>(grid.rows) * static_cast<std::size_t>(grid.cols));
  for (int r = 0; r < grid.rows; ++r)
    for (int c = 0; c < grid.cols; ++c)
      points.push_back({grid.cell_center_lat(r), grid.cell_center_lon(c)});
  return points;
}

std::vector<GeoPoint> random_positions(const GridSpec& grid, std::size_t count,
                                       std::uint64_t seed) {
  grid.validate();
  Rng rng(seed);
  std::vector<GeoPoint> points;
  points.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    points.push_back({rng.next_uniform(grid.lat_min, grid.lat_max),
                      rng.next_uniform(grid.lon_min, grid.lon_max)});
  return points;
}

}  // namespace aircast
