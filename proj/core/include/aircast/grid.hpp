#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "aircast/common.hpp"
#include "aircast/tensor.hpp"

namespace aircast {

// Geographic bounding box partitioned into rows x cols sectors.
// Row 0 sits at lat_min (south edge), column 0 at lon_min (west edge).
struct GridSpec {
  double lat_min = 23.90;
  double lat_max = 24.45;
  double lon_min = 120.37;
  double lon_max = 121.020;
  int rows = 40;
  int cols = 40;

  void validate() const;
  double dlat() const { return (lat_max - lat_min) / rows; }
  double dlon() const { return (lon_max - lon_min) / cols; }
  double cell_center_lat(int row) const { return lat_min + (row + 0.5) * dlat(); }
  double cell_center_lon(int col) const { return lon_min + (col + 0.5) * dlon(); }
  bool contains(double lat, double lon) const {
    return lat >= lat_min && lat <= lat_max && lon >= lon_min && lon <= lon_max;
  }
};

struct SectorIndex {
  int row = 0;
  int col = 0;
  bool operator==(const SectorIndex&) const = default;
};

// Sector of a position, or nullopt when outside the box. Points on the max
// boundary belong to the last sector.
std::optional<SectorIndex> sector_of(double lat, double lon, const GridSpec& grid);

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
};

struct WeightEntry {
  std::size_t node = 0;
  double weight = 0.0;  // Voronoi-cell share of the sector area, in [0, 1]
};

// Per-sector node weights. A node gets an entry only in its home sector; the
// weight is the fraction of the sector's S x S sample points whose globally
// nearest node it is (Euclidean distance in degree space).
struct VoronoiWeightMap {
  GridSpec grid;
  int subsamples = 32;
  std::vector<GeoPoint> nodes;                    // deduplicated positions
  std::vector<std::vector<WeightEntry>> sectors;  // row-major, rows*cols entries
  std::vector<std::size_t> nearest_node;          // per sector, by sector center

  const std::vector<WeightEntry>& at(int row, int col) const {
    return sectors[static_cast<std::size_t>(row) * grid.cols + col];
  }
  /// Sum of weights per sector, as an m x n map (used as the geography channel).
  Tensor density_map() const;
};

// Exact duplicate positions are collapsed to their first occurrence before
// the diagram is built; `node` indices refer to the deduplicated list.
VoronoiWeightMap compute_voronoi_weights(const std::vector<GeoPoint>& nodes,
                                         const GridSpec& grid, int subsamples = 32);

/// One rasterized heat map.
struct HeatMapFrame {
  Tensor values;  // [rows, cols], row 0 = south edge
  std::int64_t bucket = 0;
  bool normalized = false;
};

enum class FillMode { None, Nearest };

// Weighted aggregation of one bucket's readings. readings[i] pairs with
// weights.nodes[i]; a missing reading drops that node's term without
// renormalizing. Sectors with no weight entries are 0, or take the globally
// nearest node's reading under FillMode::Nearest.
HeatMapFrame rasterize_frame(const std::vector<std::optional<double>>& readings,
                             const VoronoiWeightMap& weights, std::int64_t bucket = 0,
                             FillMode fill = FillMode::None);

/// value -> min(value / theta_max, 1). theta_max must be positive.
HeatMapFrame normalize_frame(const HeatMapFrame& frame, double theta_max);
/// Exact inverse of normalize_frame for values strictly below the clip.
HeatMapFrame denormalize_frame(const HeatMapFrame& frame, double theta_max);

// --- frame files -----------------------------------------------------------
// Per frame: header `m,n,timestamp,normalized_flag`, then m rows of n comma
// separated values (row 0 = south edge). Files may concatenate many frames.

void write_frames(std::ostream& out, const std::vector<HeatMapFrame>& frames);
std::vector<HeatMapFrame> parse_frames(std::string_view text);
std::vector<HeatMapFrame> read_frames_file(const std::string& path);
void write_frames_file(const std::string& path, const std::vector<HeatMapFrame>& frames);

// Binary portable graymap (P5, 8-bit), byte = round(255 * normalized value).
// The image is written north-up: the last grid row comes first.
void write_pgm(std::ostream& out, const HeatMapFrame& frame);
void write_pgm_file(const std::string& path, const HeatMapFrame& frame);

}  // namespace aircast
