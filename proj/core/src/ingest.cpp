#include "aircast/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace aircast {

namespace {

constexpr double kEarthRadiusM = 6371008.8;
constexpr double kDegToRad = 0.017453292519943295;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// Howard Hinnant's days-from-civil algorithm.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y = static_cast<int>(yy + (m <= 2));
}

bool parse_fixed_uint(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  int v = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (i >= s.size() || s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

bool parse_double(std::string_view s, double& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto res = std::from_chars(first, last, out);
  return res.ec == std::errc{} && res.ptr == last;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

[[noreturn]] void record_error(std::size_t line_no, const char* field, const std::string& what) {
  std::ostringstream os;
  os << "line " << line_no << ": field '" << field << "': " << what;
  throw DataError(os.str());
}

}  // namespace

std::optional<std::int64_t> parse_iso8601_utc(std::string_view text) {
  // exactly "YYYY-MM-DDTHH:MM:SSZ"
  if (text.size() != 20) return std::nullopt;
  if (text[4] != '-' || text[7] != '-' || text[10] != 'T' || text[13] != ':' ||
      text[16] != ':' || text[19] != 'Z')
    return std::nullopt;
  int year, month, day, hour, minute, second;
  if (!parse_fixed_uint(text, 0, 4, year) || !parse_fixed_uint(text, 5, 2, month) ||
      !parse_fixed_uint(text, 8, 2, day) || !parse_fixed_uint(text, 11, 2, hour) ||
      !parse_fixed_uint(text, 14, 2, minute) || !parse_fixed_uint(text, 17, 2, second))
    return std::nullopt;
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60)
    return std::nullopt;
  return days_from_civil(year, month, day) * 86400 + hour * 3600 + minute * 60 + second;
}

std::string format_iso8601_utc(std::int64_t seconds) {
  std::int64_t days = floor_div(seconds, 86400);
  std::int64_t rem = seconds - days * 86400;
  int y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[72];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", y, m, d,
                static_cast<long long>(rem / 3600), static_cast<long long>((rem / 60) % 60),
                static_cast<long long>(rem % 60));
  return buf;
}

std::vector<SensorRecord> parse_records(std::string_view text) {
  std::vector<SensorRecord> records;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (eol == std::string_view::npos) break;
      ++line_no;
      continue;
    }
    ++line_no;
    if (!saw_header) {
      if (line != "node_id,lat,lon,timestamp,pm25")
        throw DataError("line 1: expected header 'node_id,lat,lon,timestamp,pm25'");
      saw_header = true;
      line_no = 0;  // data lines are numbered from 1
      continue;
    }
    auto fields = split_csv(line);
    if (fields.size() != 5) record_error(line_no, "line", "expected 5 comma-separated fields");
    SensorRecord rec;
    rec.node_id = std::string(fields[0]);
    if (rec.node_id.empty()) record_error(line_no, "node_id", "empty");
    if (!parse_double(fields[1], rec.latitude) || !std::isfinite(rec.latitude))
      record_error(line_no, "lat", "not a number");
    if (rec.latitude < -90.0 || rec.latitude > 90.0)
      record_error(line_no, "lat", "outside [-90, 90]");
    if (!parse_double(fields[2], rec.longitude) || !std::isfinite(rec.longitude))
      record_error(line_no, "lon", "not a number");
    if (rec.longitude < -180.0 || rec.longitude > 180.0)
      record_error(line_no, "lon", "outside [-180, 180]");
    auto ts = parse_iso8601_utc(fields[3]);
    if (!ts) record_error(line_no, "timestamp", "not ISO-8601 UTC (YYYY-MM-DDTHH:MM:SSZ)");
    rec.timestamp = *ts;
    if (!parse_double(fields[4], rec.pm25) || !std::isfinite(rec.pm25))
      record_error(line_no, "pm25", "not a number");
    if (rec.pm25 < 0.0) record_error(line_no, "pm25", "rejected record: negative reading");
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<SensorRecord> read_records_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open records file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_records(buf.str());
}

void write_records(std::ostream& out, const std::vector<SensorRecord>& records) {
  out << "node_id,lat,lon,timestamp,pm25\n";
  for (const auto& r : records) {
    out << r.node_id << ',' << format_double(r.latitude) << ',' << format_double(r.longitude)
        << ',' << format_iso8601_utc(r.timestamp) << ',' << format_double(r.pm25) << '\n';
  }
}

NodeSeries resample_series(const std::vector<SensorRecord>& records,
                           std::int64_t period_seconds) {
  if (records.empty()) throw DataError("resample_series: empty input");
  if (period_seconds <= 0) throw DataError("resample_series: period must be positive");
  const std::string& id = records.front().node_id;
  std::map<std::int64_t, std::pair<double, std::size_t>> buckets;  // bucket -> (sum, count)
  for (const auto& r : records) {
    if (r.node_id != id)
      throw DataError("resample_series: mixed node_ids ('" + id + "' vs '" + r.node_id + "')");
    std::int64_t b = floor_div(r.timestamp, period_seconds);
    auto& acc = buckets[b];
    acc.first += r.pm25;
    acc.second += 1;
  }
  NodeSeries series;
  series.node_id = id;
  series.latitude = records.front().latitude;
  series.longitude = records.front().longitude;
  series.period_seconds = period_seconds;
  series.start_bucket = buckets.begin()->first;
  std::int64_t last = buckets.rbegin()->first;
  series.values.assign(static_cast<std::size_t>(last - series.start_bucket + 1), std::nullopt);
  for (const auto& [bucket, acc] : buckets)
    series.values[static_cast<std::size_t>(bucket - series.start_bucket)] =
        acc.first / static_cast<double>(acc.second);
  return series;
}

std::vector<SensorRecord> to_records(const NodeSeries& series) {
  std::vector<SensorRecord> records;
  records.reserve(series.values.size());
  for (std::size_t i = 0; i < series.values.size(); ++i) {
    if (!series.values[i]) continue;
    SensorRecord r;
    r.node_id = series.node_id;
    r.latitude = series.latitude;
    r.longitude = series.longitude;
    r.timestamp = series.bucket_at(i) * series.period_seconds;
    r.pm25 = *series.values[i];
    records.push_back(std::move(r));
  }
  return records;
}

std::size_t window_count(std::size_t length, std::size_t t_in, std::size_t t_out,
                         std::size_t stride) {
  if (length < t_in + t_out) return 0;
  return (length - t_in - t_out) / stride + 1;
}

std::vector<WindowSample> make_windows(const std::vector<const NodeSeries*>& channels,
                                       std::size_t t_in, std::size_t t_out,
                                       std::size_t stride) {
  if (channels.empty()) throw DataError("make_windows: need at least one channel");
  if (t_in < 1 || t_out < 1 || stride < 1)
    throw DataError("make_windows: t_in, t_out and stride must be >= 1");
  const NodeSeries& base = *channels.front();
  for (const NodeSeries* ch : channels) {
    if (ch->start_bucket != base.start_bucket || ch->length() != base.length() ||
        ch->period_seconds != base.period_seconds)
      throw DataError("make_windows: channel series are not aligned on the same bucket grid");
  }
  std::vector<WindowSample> samples;
  const std::size_t span = t_in + t_out;
  const std::size_t total = window_count(base.length(), t_in, t_out, stride);
  for (std::size_t w = 0; w < total; ++w) {
    const std::size_t offset = w * stride;
    bool has_gap = false;
    for (const NodeSeries* ch : channels) {
      for (std::size_t i = offset; i < offset + span && !has_gap; ++i)
        if (!ch->values[i]) has_gap = true;
      if (has_gap) break;
    }
    if (has_gap) continue;
    WindowSample s;
    s.start_bucket = base.bucket_at(offset);
    s.inputs.resize(t_in);
    for (std::size_t i = 0; i < t_in; ++i) {
      s.inputs[i].reserve(channels.size());
      for (const NodeSeries* ch : channels) s.inputs[i].push_back(*ch->values[offset + i]);
    }
    s.target.reserve(t_out);
    for (std::size_t i = 0; i < t_out; ++i)
      s.target.push_back(*base.values[offset + t_in + i]);
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<WindowSample> make_windows(const NodeSeries& series, std::size_t t_in,
                                       std::size_t t_out, std::size_t stride) {
  return make_windows(std::vector<const NodeSeries*>{&series}, t_in, t_out, stride);
}

double great_circle_m(double lat1, double lon1, double lat2, double lon2) {
  double phi1 = lat1 * kDegToRad;
  double phi2 = lat2 * kDegToRad;
  double dphi = (lat2 - lat1) * kDegToRad;
  double dlam = (lon2 - lon1) * kDegToRad;
  double s1 = std::sin(dphi / 2);
  double s2 = std::sin(dlam / 2);
  double a = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

std::vector<std::size_t> select_neighbors(const std::vector<NodeSeries>& nodes,
                                          std::size_t center, std::size_t k) {
  if (center >= nodes.size()) throw DataError("select_neighbors: center index out of range");
  const NodeSeries& c = nodes[center];
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < nodes.size(); ++i)
    if (i != center) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    double da = great_circle_m(c.latitude, c.longitude, nodes[a].latitude, nodes[a].longitude);
    double db = great_circle_m(c.latitude, c.longitude, nodes[b].latitude, nodes[b].longitude);
    if (da != db) return da < db;
    return nodes[a].node_id < nodes[b].node_id;
  });
  if (order.size() > k) order.resize(k);
  return order;
}

void write_series(std::ostream& out, const std::vector<NodeSeries>& series) {
  out << "node_id,bucket_index,value\n";
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.values.size(); ++i) {
      out << s.node_id << ',' << s.bucket_at(i) << ',';
      if (s.values[i])
        out << format_double(*s.values[i]);
      else
        out << "NA";
      out << '\n';
    }
  }
}

std::vector<NodeSeries> parse_series(std::string_view text, std::int64_t period_seconds) {
  std::vector<NodeSeries> result;
  std::map<std::string, std::size_t> index;
  std::map<std::string, std::map<std::int64_t, std::optional<double>>> rows;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool saw_header = false;
  std::vector<std::string> order;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (eol == std::string_view::npos) break;
      continue;
    }
    ++line_no;
    if (!saw_header) {
      if (line != "node_id,bucket_index,value")
        throw DataError("line 1: expected header 'node_id,bucket_index,value'");
      saw_header = true;
      line_no = 0;
      continue;
    }
    auto fields = split_csv(line);
    if (fields.size() != 3) record_error(line_no, "line", "expected 3 comma-separated fields");
    std::string id(fields[0]);
    if (id.empty()) record_error(line_no, "node_id", "empty");
    std::int64_t bucket = 0;
    {
      auto res = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), bucket);
      if (res.ec != std::errc{} || res.ptr != fields[1].data() + fields[1].size())
        record_error(line_no, "bucket_index", "not an integer");
    }
    std::optional<double> value;
    if (fields[2] != "NA") {
      double v;
      if (!parse_double(fields[2], v) || !std::isfinite(v) || v < 0.0)
        record_error(line_no, "value", "not a nonnegative number or NA");
      value = v;
    }
    if (rows.find(id) == rows.end()) order.push_back(id);
    rows[id][bucket] = value;
  }
  for (const auto& id : order) {
    const auto& buckets = rows[id];
    NodeSeries s;
    s.node_id = id;
    s.period_seconds = period_seconds;
    s.start_bucket = buckets.begin()->first;
    std::int64_t last = buckets.rbegin()->first;
    s.values.assign(static_cast<std::size_t>(last - s.start_bucket + 1), std::nullopt);
    for (const auto& [bucket, value] : buckets)
      s.values[static_cast<std::size_t>(bucket - s.start_bucket)] = value;
    result.push_back(std::move(s));
  }
  return result;
}

std::vector<NodeSeries> read_series_file(const std::string& path, std::int64_t period_seconds) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open series file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_series(buf.str(), period_seconds);
}

}  // namespace aircast
