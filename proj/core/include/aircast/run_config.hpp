#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aircast/common.hpp"
#include "aircast/grid.hpp"
#include "aircast/models.hpp"
#include "aircast/optimize.hpp"
#include "aircast/synth.hpp"

namespace aircast {

// Flat `key = value` configuration with `#` comments. Every key is validated
// against the schema below; unknown keys are rejected.
struct RunConfig {
  // grid
  double lat_min = 23.90;
  double lat_max = 24.45;
  double lon_min = 120.37;
  double lon_max = 121.020;
  int rows = 20;
  int cols = 20;
  int subsamples = 32;
  std::string fill = "none";  // none | nearest

  // windowing / model
  int t_in = 12;
  int horizon = 12;
  double theta_max = 0.0;  // 0 = derive from the training frames
  std::string model = "crnn";  // crnn | convlstm | cnn | nn | lstm
  int filters = 16;
  int penultimate_filters = 20;
  int kernel = 3;
  int hidden = 24;
  double dropout = 0.2;

  // training
  int batch_size = 20;
  int epochs = 500;
  double lr = 0.0002;
  double decay_factor = 0.8;
  int patience = 10;
  double train_fraction = 0.9;
  int window_stride = 1;
  int checkpoint_every = 0;

  // evaluation
  std::vector<double> sigmas = {0.0, 0.1, 0.2};
  int noise_seeds = 10;

  // synthetic plume
  int steps = 600;
  double dt = 1.0;
  double diffusion = 0.04;
  double wind_u = 0.5;
  double wind_v = 0.15;
  double wind_rotate_steps = 96;
  std::string boundary = "outflow";  // outflow | periodic
  double background = 4.0;
  // semicolon-separated "lat,lon,rate,on_hour,off_hour" tuples; empty = defaults
  std::string sources;
  int sensor_count = 60;
  double read_noise = 0.0;
  double sensor_dropout = 0.0;
  std::int64_t resample_period = 7200;

  std::uint64_t seed = 0;

  GridSpec grid_spec() const;
  PlumeConfig plume_config() const;
  TrainConfig train_config() const;
  CrnnConfig crnn_config(Tensor geography = {}) const;
  ComparatorConfig comparator_config() const;
  FillMode fill_mode() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig read_run_config_file(const std::string& path);

}  // namespace aircast
