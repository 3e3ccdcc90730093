#include "aircast/grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "aircast/parallel.hpp"

namespace aircast {

namespace {

// Relative nudge so positions mathematically on a sector boundary do not fall
// into the lower cell through floating-point rounding.
constexpr double kBoundaryEps = 1e-9;

double parse_strict_double(std::string_view s, const char* what) {
  try {
    std::size_t used = 0;
    std::string tmp(s);
    double v = std::stod(tmp, &used);
    if (used != tmp.size() || !std::isfinite(v)) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw DataError(std::string("frame file: bad ") + what + " value '" + std::string(s) + "'");
  }
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void GridSpec::validate() const {
  if (!(lat_max > lat_min) || !(lon_max > lon_min))
    throw DataError("GridSpec: bounding box is empty");
  if (rows < 1 || cols < 1) throw DataError("GridSpec: rows and cols must be >= 1");
}

std::optional<SectorIndex> sector_of(double lat, double lon, const GridSpec& grid) {
  grid.validate();
  if (!grid.contains(lat, lon)) return std::nullopt;
  double row_f = (lat - grid.lat_min) / grid.dlat();
  double col_f = (lon - grid.lon_min) / grid.dlon();
  int row = static_cast<int>(std::floor(row_f + kBoundaryEps));
  int col = static_cast<int>(std::floor(col_f + kBoundaryEps));
  row = std::min(row, grid.rows - 1);  // max-boundary points go to the last sector
  col = std::min(col, grid.cols - 1);
  return SectorIndex{row, col};
}

Tensor VoronoiWeightMap::density_map() const {
  Tensor map({static_cast<std::size_t>(grid.rows), static_cast<std::size_t>(grid.cols)});
  for (int r = 0; r < grid.rows; ++r)
    for (int c = 0; c < grid.cols; ++c) {
      double sum = 0.0;
      for (const auto& e : at(r, c)) sum += e.weight;
      map[static_cast<std::size_t>(r) * grid.cols + c] = sum;
    }
  return map;
}

VoronoiWeightMap compute_voronoi_weights(const std::vector<GeoPoint>& nodes,
                                         const GridSpec& grid, int subsamples) {
  grid.validate();
  if (nodes.empty()) throw DataError("compute_voronoi_weights: zero nodes");
  if (subsamples < 1) throw DataError("compute_voronoi_weights: subsamples must be >= 1");

  VoronoiWeightMap map;
  map.grid = grid;
  map.subsamples = subsamples;
  map.nodes.reserve(nodes.size());
  for (const auto& p : nodes) {
    bool dup = false;
    for (const auto& q : map.nodes)
      if (q.lat == p.lat && q.lon == p.lon) {
        dup = true;
        break;
      }
    if (!dup) map.nodes.push_back(p);
  }

  const std::size_t n_nodes = map.nodes.size();
  std::vector<double> node_lat(n_nodes), node_lon(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    node_lat[i] = map.nodes[i].lat;
    node_lon[i] = map.nodes[i].lon;
  }

  // Home sector per node (Eq-style membership: a node only weights the sector
  // that contains it).
  std::vector<std::optional<SectorIndex>> home(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i)
    home[i] = sector_of(node_lat[i], node_lon[i], grid);

  const std::size_t sector_count =
      static_cast<std::size_t>(grid.rows) * static_cast<std::size_t>(grid.cols);
  map.sectors.assign(sector_count, {});
  map.nearest_node.assign(sector_count, 0);

  const double dlat = grid.dlat();
  const double dlon = grid.dlon();
  const double s = static_cast<double>(subsamples);
  const double inv_area = 1.0 / (s * s);

  parallel_for(sector_count, [&](std::size_t sector) {
    const int row = static_cast<int>(sector) / grid.cols;
    const int col = static_cast<int>(sector) % grid.cols;
    const double lat0 = grid.lat_min + row * dlat;
    const double lon0 = grid.lon_min + col * dlon;

    std::vector<std::size_t> counts(n_nodes, 0);
    for (int a = 0; a < subsamples; ++a) {
      const double lat = lat0 + (a + 0.5) / s * dlat;
      for (int b = 0; b < subsamples; ++b) {
        const double lon = lon0 + (b + 0.5) / s * dlon;
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n_nodes; ++i) {
          const double dy = node_lat[i] - lat;
          const double dx = node_lon[i] - lon;
          const double d = dy * dy + dx * dx;
          if (d < best_d) {  // ties keep the lower node index
            best_d = d;
            best = i;
          }
        }
        ++counts[best];
      }
    }

    auto& entries = map.sectors[sector];
    for (std::size_t i = 0; i < n_nodes; ++i) {
      if (counts[i] == 0) continue;
      if (!home[i] || home[i]->row != row || home[i]->col != col) continue;
      entries.push_back({i, static_cast<double>(counts[i]) * inv_area});
    }

    // Nearest node to the sector center, for the optional fill mode.
    const double clat = lat0 + 0.5 * dlat;
    const double clon = lon0 + 0.5 * dlon;
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_nodes; ++i) {
      const double dy = node_lat[i] - clat;
      const double dx = node_lon[i] - clon;
      const double d = dy * dy + dx * dx;
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    map.nearest_node[sector] = best;
  });

  return map;
}

HeatMapFrame rasterize_frame(const std::vector<std::optional<double>>& readings,
                             const VoronoiWeightMap& weights, std::int64_t bucket,
                             FillMode fill) {
  if (readings.size() != weights.nodes.size())
    throw DataError("rasterize_frame: readings size does not match node count");
  for (const auto& r : readings) {
    if (!r) continue;
    if (!std::isfinite(*r)) throw DataError("rasterize_frame: non-finite reading");
    if (*r < 0.0) throw DataError("rasterize_frame: negative reading");
  }
  HeatMapFrame frame;
  frame.bucket = bucket;
  frame.normalized = false;
  const int rows = weights.grid.rows;
  const int cols = weights.grid.cols;
  frame.values = Tensor({static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)});
  for (std::size_t sector = 0; sector < weights.sectors.size(); ++sector) {
    const auto& entries = weights.sectors[sector];
    double theta = 0.0;
    if (!entries.empty()) {
      for (const auto& e : entries)
        if (readings[e.node]) theta += *readings[e.node] * e.weight;
    } else if (fill == FillMode::Nearest) {
      const auto& r = readings[weights.nearest_node[sector]];
      theta = r ? *r : 0.0;
    }
    frame.values[sector] = theta;
  }
  return frame;
}

HeatMapFrame normalize_frame(const HeatMapFrame& frame, double theta_max) {
  if (!(theta_max > 0.0)) throw DataError("normalize_frame: theta_max must be positive");
  HeatMapFrame out = frame;
  out.normalized = true;
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = std::min(frame.values[i] / theta_max, 1.0);
  return out;
}

HeatMapFrame denormalize_frame(const HeatMapFrame& frame, double theta_max) {
  if (!(theta_max > 0.0)) throw DataError("denormalize_frame: theta_max must be positive");
  HeatMapFrame out = frame;
  out.normalized = false;
  for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = frame.values[i] * theta_max;
  return out;
}

void write_frames(std::ostream& out, const std::vector<HeatMapFrame>& frames) {
  for (const auto& f : frames) {
    const std::size_t rows = f.values.dim(0);
    const std::size_t cols = f.values.dim(1);
    out << rows << ',' << cols << ',' << f.bucket << ',' << (f.normalized ? 1 : 0) << '\n';
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        if (c) out << ',';
        out << format_double(f.values[r * cols + c]);
      }
      out << '\n';
    }
  }
}

std::vector<HeatMapFrame> parse_frames(std::string_view text) {
  std::vector<HeatMapFrame> frames;
  std::size_t pos = 0;
  auto next_line = [&]() -> std::optional<std::string_view> {
    while (pos < text.size()) {
      std::size_t eol = text.find('\n', pos);
      std::string_view line =
          text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
      pos = eol == std::string_view::npos ? text.size() : eol + 1;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (!line.empty()) return line;
    }
    return std::nullopt;
  };
  while (auto header = next_line()) {
    std::vector<std::string_view> head;
    {
      std::string_view h = *header;
      std::size_t start = 0;
      while (true) {
        std::size_t comma = h.find(',', start);
        if (comma == std::string_view::npos) {
          head.push_back(h.substr(start));
          break;
        }
        head.push_back(h.substr(start, comma - start));
        start = comma + 1;
      }
    }
    if (head.size() != 4) throw DataError("frame file: header must be m,n,timestamp,normalized_flag");
    HeatMapFrame frame;
    const auto rows = static_cast<std::size_t>(parse_strict_double(head[0], "row count"));
    const auto cols = static_cast<std::size_t>(parse_strict_double(head[1], "column count"));
    if (rows < 1 || cols < 1) throw DataError("frame file: empty grid in header");
    frame.bucket = static_cast<std::int64_t>(parse_strict_double(head[2], "timestamp"));
    const double flag = parse_strict_double(head[3], "normalized flag");
    if (flag != 0.0 && flag != 1.0) throw DataError("frame file: normalized flag must be 0 or 1");
    frame.normalized = flag == 1.0;
    frame.values = Tensor({rows, cols});
    for (std::size_t r = 0; r < rows; ++r) {
      auto line = next_line();
      if (!line) throw DataError("frame file: truncated frame body");
      std::size_t start = 0, c = 0;
      std::string_view l = *line;
      while (c < cols) {
        std::size_t comma = l.find(',', start);
        std::string_view cell =
            l.substr(start, comma == std::string_view::npos ? l.size() - start : comma - start);
        frame.values[r * cols + c] = parse_strict_double(cell, "cell");
        ++c;
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      if (c != cols) throw DataError("frame file: row has wrong column count");
    }
    frames.push_back(std::move(frame));
  }
  return frames;
}

std::vector<HeatMapFrame> read_frames_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open frames file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_frames(buf.str());
}

void write_frames_file(const std::string& path, const std::vector<HeatMapFrame>& frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open output frames file: " + path);
  write_frames(out, frames);
}

void write_pgm(std::ostream& out, const HeatMapFrame& frame) {
  if (!frame.normalized)
    throw DataError("write_pgm: frame must be normalized to [0, 1] first");
  const std::size_t rows = frame.values.dim(0);
  const std::size_t cols = frame.values.dim(1);
  out << "P5\n" << cols << ' ' << rows << "\n255\n";
  for (std::size_t r = rows; r-- > 0;) {  // north-up image: last grid row first
    for (std::size_t c = 0; c < cols; ++c) {
      double v = std::clamp(frame.values[r * cols + c], 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
  }
}

void write_pgm_file(const std::string& path, const HeatMapFrame& frame) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open output image file: " + path);
  write_pgm(out, frame);
}

}  // namespace aircast
