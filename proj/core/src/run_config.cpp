#include "aircast/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace aircast {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw UsageError("config: key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::int64_t to_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    throw UsageError("config: key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

std::vector<double> to_double_list(const std::string& key, const std::string& v) {
  std::vector<double> values;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) values.push_back(to_double(key, trim(item)));
  if (values.empty()) throw UsageError("config: key '" + key + "': empty list");
  return values;
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string&)>;

const std::map<std::string, Setter>& schema() {
  auto dbl = [](double RunConfig::* field) {
    return Setter([field](RunConfig& c, const std::string& k, const std::string& v) {
      c.*field = to_double(k, v);
    });
  };
  auto integer = [](int RunConfig::* field, int lo, int hi) {
    return Setter([field, lo, hi](RunConfig& c, const std::string& k, const std::string& v) {
      auto value = to_int(k, v);
      if (value < lo || value > hi)
        throw UsageError("config: key '" + k + "': value out of range [" + std::to_string(lo) +
                         ", " + std::to_string(hi) + "]");
      c.*field = static_cast<int>(value);
    });
  };
  auto str = [](std::string RunConfig::* field, std::vector<std::string> allowed) {
    return Setter([field, allowed = std::move(allowed)](RunConfig& c, const std::string& k,
                                                        const std::string& v) {
      if (!allowed.empty() &&
          std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
        std::string opts;
        for (const auto& a : allowed) opts += (opts.empty() ? "" : "|") + a;
        throw UsageError("config: key '" + k + "': expected one of " + opts);
      }
      c.*field = v;
    });
  };

  static const std::map<std::string, Setter> s = {
      {"lat_min", dbl(&RunConfig::lat_min)},
      {"lat_max", dbl(&RunConfig::lat_max)},
      {"lon_min", dbl(&RunConfig::lon_min)},
      {"lon_max", dbl(&RunConfig::lon_max)},
      {"rows", integer(&RunConfig::rows, 1, 4096)},
      {"cols", integer(&RunConfig::cols, 1, 4096)},
      {"subsamples", integer(&RunConfig::subsamples, 1, 1024)},
      {"fill", str(&RunConfig::fill, {"none", "nearest"})},
      {"t_in", integer(&RunConfig::t_in, 1, 4096)},
      {"horizon", integer(&RunConfig::horizon, 1, 4096)},
      {"theta_max", dbl(&RunConfig::theta_max)},
      {"model", str(&RunConfig::model, {"crnn", "convlstm", "cnn", "nn", "lstm"})},
      {"filters", integer(&RunConfig::filters, 1, 1024)},
      {"penultimate_filters", integer(&RunConfig::penultimate_filters, 1, 1024)},
      {"kernel", integer(&RunConfig::kernel, 1, 31)},
      {"hidden", integer(&RunConfig::hidden, 1, 4096)},
      {"dropout", dbl(&RunConfig::dropout)},
      {"batch_size", integer(&RunConfig::batch_size, 1, 65536)},
      {"epochs", integer(&RunConfig::epochs, 1, 1000000)},
      {"lr", dbl(&RunConfig::lr)},
      {"decay_factor", dbl(&RunConfig::decay_factor)},
      {"patience", integer(&RunConfig::patience, 1, 1000000)},
      {"train_fraction", dbl(&RunConfig::train_fraction)},
      {"window_stride", integer(&RunConfig::window_stride, 1, 65536)},
      {"checkpoint_every", integer(&RunConfig::checkpoint_every, 0, 1000000)},
      {"sigmas",
       Setter([](RunConfig& c, const std::string& k, const std::string& v) {
         c.sigmas = to_double_list(k, v);
         for (double s : c.sigmas)
           if (s < 0.0) throw UsageError("config: key 'sigmas': sigma must be >= 0");
       })},
      {"noise_seeds", integer(&RunConfig::noise_seeds, 1, 100000)},
      {"steps", integer(&RunConfig::steps, 1, 10000000)},
      {"dt", dbl(&RunConfig::dt)},
      {"diffusion", dbl(&RunConfig::diffusion)},
      {"wind_u", dbl(&RunConfig::wind_u)},
      {"wind_v", dbl(&RunConfig::wind_v)},
      {"wind_rotate_steps", dbl(&RunConfig::wind_rotate_steps)},
      {"boundary", str(&RunConfig::boundary, {"outflow", "periodic"})},
      {"background", dbl(&RunConfig::background)},
      {"sources", str(&RunConfig::sources, {})},
      {"sensor_count", integer(&RunConfig::sensor_count, 1, 100000)},
      {"read_noise", dbl(&RunConfig::read_noise)},
      {"sensor_dropout", dbl(&RunConfig::sensor_dropout)},
      {"resample_period",
       Setter([](RunConfig& c, const std::string& k, const std::string& v) {
         auto value = to_int(k, v);
         if (value < 1) throw UsageError("config: key 'resample_period': must be >= 1");
         c.resample_period = value;
       })},
      {"seed", Setter([](RunConfig& c, const std::string& k, const std::string& v) {
         try {
           c.seed = std::stoull(v);
         } catch (const std::exception&) {
           throw UsageError("config: key '" + k + "': expected an unsigned integer");
         }
       })},
  };
  return s;
}

void validate(const RunConfig& c) {
  if (!(c.lat_max > c.lat_min) || !(c.lon_max > c.lon_min))
    throw UsageError("config: empty bounding box");
  if (c.dropout < 0.0 || c.dropout >= 1.0)
    throw UsageError("config: dropout must be in [0, 1)");
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
    throw UsageError("config: train_fraction must be in (0, 1)");
  if (!(c.decay_factor > 0.0 && c.decay_factor < 1.0))
    throw UsageError("config: decay_factor must be in (0, 1)");
  if (!(c.lr > 0.0)) throw UsageError("config: lr must be positive");
  if (c.theta_max < 0.0) throw UsageError("config: theta_max must be >= 0 (0 = auto)");
  if (c.kernel % 2 == 0) throw UsageError("config: kernel must be odd");
  if (c.sensor_dropout < 0.0 || c.sensor_dropout > 1.0)
    throw UsageError("config: sensor_dropout must be in [0, 1]");
  if (c.read_noise < 0.0) throw UsageError("config: read_noise must be >= 0");
  if (!(c.dt > 0.0)) throw UsageError("config: dt must be positive");
  if (c.diffusion < 0.0) throw UsageError("config: diffusion must be >= 0");
  if (c.background < 0.0) throw UsageError("config: background must be >= 0");
}

std::vector<PlumeSource> parse_sources(const std::string& text) {
  std::vector<PlumeSource> sources;
  std::istringstream in(text);
  std::string tuple;
  while (std::getline(in, tuple, ';')) {
    tuple = trim(tuple);
    if (tuple.empty()) continue;
    std::istringstream ts(tuple);
    std::string field;
    std::vector<double> vals;
    while (std::getline(ts, field, ','))
      vals.push_back(to_double("sources", trim(field)));
    if (vals.size() != 5)
      throw UsageError("config: key 'sources': expected lat,lon,rate,on_hour,off_hour tuples");
    sources.push_back({vals[0], vals[1], vals[2], vals[3], vals[4]});
  }
  return sources;
}

}  // namespace

GridSpec RunConfig::grid_spec() const {
  GridSpec g;
  g.lat_min = lat_min;
  g.lat_max = lat_max;
  g.lon_min = lon_min;
  g.lon_max = lon_max;
  g.rows = rows;
  g.cols = cols;
  g.validate();
  return g;
}

PlumeConfig RunConfig::plume_config() const {
  PlumeConfig p = PlumeConfig::desk_default();
  p.grid = grid_spec();
  p.steps = steps;
  p.dt = dt;
  p.diffusion = diffusion;
  p.wind_u = wind_u;
  p.wind_v = wind_v;
  p.wind_rotate_steps = wind_rotate_steps;
  p.boundary = boundary == "periodic" ? Boundary::Periodic : Boundary::Outflow;
  p.background = background;
  p.seconds_per_step = resample_period;
  p.seed = seed;
  if (!sources.empty()) p.sources = parse_sources(sources);
  return p;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.batch_size = batch_size;
  t.epochs = epochs;
  t.lr = lr;
  t.decay_factor = decay_factor;
  t.patience = patience;
  t.seed = seed;
  t.checkpoint_every = checkpoint_every;
  return t;
}

CrnnConfig RunConfig::crnn_config(Tensor geography) const {
  CrnnConfig c;
  c.rows = rows;
  c.cols = cols;
  c.t_in = t_in;
  c.block_filters = filters;
  c.penultimate_filters = penultimate_filters;
  c.kernel = kernel;
  c.geography = std::move(geography);
  return c;
}

ComparatorConfig RunConfig::comparator_config() const {
  ComparatorConfig c;
  auto kind = frame_model_kind_from(model);
  if (!kind || *kind == FrameModelKind::Crnn)
    throw UsageError("config: comparator_config called for model '" + model + "'");
  c.kind = *kind;
  c.rows = rows;
  c.cols = cols;
  c.t_in = t_in;
  c.filters = filters;
  c.hidden = hidden;
  c.kernel = kernel;
  return c;
}

FillMode RunConfig::fill_mode() const {
  return fill == "nearest" ? FillMode::Nearest : FillMode::None;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    auto it = schema().find(key);
    if (it == schema().end())
      throw UsageError("config line " + std::to_string(line_no) + ": unknown key '" + key +
                       "'");
    it->second(config, key, value);
  }
  validate(config);
  return config;
}

RunConfig read_run_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

}  // namespace aircast
