#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aircast/common.hpp"

namespace aircast {

/// One raw reading from a sensor node.
struct SensorRecord {
  std::string node_id;
  double latitude = 0.0;   // degrees, [-90, 90]
  double longitude = 0.0;  // degrees, [-180, 180]
  std::int64_t timestamp = 0;  // UTC seconds
  double pm25 = 0.0;           // µg/m³, finite and >= 0
};

// A per-node series resampled onto a fixed period. Buckets are anchored at
// the Unix epoch (bucket = floor(timestamp / period)); empty buckets are
// kept as gaps so they can invalidate windows downstream.
struct NodeSeries {
  std::string node_id;
  double latitude = 0.0;
  double longitude = 0.0;
  std::int64_t period_seconds = 7200;
  std::int64_t start_bucket = 0;
  std::vector<std::optional<double>> values;  // dense from start_bucket

  std::size_t length() const { return values.size(); }
  std::int64_t bucket_at(std::size_t i) const { return start_bucket + static_cast<std::int64_t>(i); }
};

/// One supervised sample: T_in input steps (c channels each) and T_out targets.
struct WindowSample {
  std::vector<std::vector<double>> inputs;  // [T_in][channels]; channel 0 is the test node
  std::vector<double> target;               // [T_out], from channel 0
  std::int64_t start_bucket = 0;
};

// --- timestamps ---------------------------------------------------------

/// Strict ISO-8601 UTC parse, "YYYY-MM-DDTHH:MM:SSZ". Nullopt on any deviation.
std::optional<std::int64_t> parse_iso8601_utc(std::string_view text);
std::string format_iso8601_utc(std::int64_t seconds);

// --- records ------------------------------------------------------------

// Input format: header `node_id,lat,lon,timestamp,pm25`, one reading per line.
// Throws DataError naming the line number and field on the first malformed
// line; a negative pm25 is reported as a rejected record.
std::vector<SensorRecord> parse_records(std::string_view text);
std::vector<SensorRecord> read_records_file(const std::string& path);
void write_records(std::ostream& out, const std::vector<SensorRecord>& records);

// --- resampling / splitting / windowing ----------------------------------

/// Mean per period bucket; empty buckets become gaps. All records must share
/// one node_id and the input must be nonempty.
NodeSeries resample_series(const std::vector<SensorRecord>& records,
                           std::int64_t period_seconds = 7200);

/// Rebuilds one synthetic record per non-gap bucket (timestamp = bucket start).
std::vector<SensorRecord> to_records(const NodeSeries& series);

/// Chronological split: first floor(L * train_fraction) items, then the rest.
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split_series(const std::vector<T>& items,
                                                       double train_fraction = 0.9) {
  if (items.size() < 2) throw DataError("split_series: need at least 2 items");
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw DataError("split_series: train_fraction must be in (0, 1)");
  // floor with a nudge so exact products like 240*0.9 do not round down
  auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(items.size()) * train_fraction + 1e-9));
  if (n_train == 0) n_train = 1;
  if (n_train >= items.size()) n_train = items.size() - 1;
  std::vector<T> train(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<T> test(items.begin() + static_cast<std::ptrdiff_t>(n_train), items.end());
  return {std::move(train), std::move(test)};
}

// Sliding windows over aligned channel series. channels[0] is the test node;
// every sample overlapping a gap (in any channel) is dropped. All channels
// must share start_bucket, length and period.
std::vector<WindowSample> make_windows(const std::vector<const NodeSeries*>& channels,
                                       std::size_t t_in = 24, std::size_t t_out = 1,
                                       std::size_t stride = 1);
std::vector<WindowSample> make_windows(const NodeSeries& series, std::size_t t_in = 24,
                                       std::size_t t_out = 1, std::size_t stride = 1);

/// Gap-free sample count: floor((L - T_in - T_out)/stride) + 1 when positive.
std::size_t window_count(std::size_t length, std::size_t t_in, std::size_t t_out,
                         std::size_t stride);

/// Great-circle distance (meters) on the WGS84 mean sphere.
double great_circle_m(double lat1, double lon1, double lat2, double lon2);

// k nearest neighbor indices to `center` (excluded from its own list),
// ordered by great-circle distance, ties by node_id.
std::vector<std::size_t> select_neighbors(const std::vector<NodeSeries>& nodes,
                                          std::size_t center, std::size_t k);

// --- resampled-series file format ----------------------------------------
// `node_id,bucket_index,value` with literal NA for gaps, one row per bucket.

void write_series(std::ostream& out, const std::vector<NodeSeries>& series);
std::vector<NodeSeries> parse_series(std::string_view text, std::int64_t period_seconds = 7200);
std::vector<NodeSeries> read_series_file(const std::string& path,
                                         std::int64_t period_seconds = 7200);

}  // namespace aircast
