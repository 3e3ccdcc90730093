#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "aircast/common.hpp"
#include "aircast/models.hpp"
#include "aircast/tensor.hpp"

namespace aircast {

// (1/theta_bar) * sqrt( (1/MN) * sum (theta - theta_hat)^2 ), theta_bar the
// mean of the ground truth. Undefined (error) when theta_bar <= 0.
double nrmse(const Tensor& prediction, const Tensor& truth);

struct NoiseConfig {
  double sigma = 0.0;  // stddev of zero-mean Gaussian on normalized values
  std::uint64_t seed = 0;
};

/// value' = clamp(value + N(0, sigma^2), 0, 1), reproducible per seed.
std::vector<Tensor> add_noise(const std::vector<Tensor>& frames, const NoiseConfig& config);

struct HorizonMetrics {
  int horizon = 0;
  double nrmse = 0.0;
  double accuracy = 0.0;  // 1 - NRMSE (both are reported, never conflated)
  std::size_t count = 0;  // sequences contributing
};

struct Metrics {
  std::vector<HorizonMetrics> per_horizon;
  std::size_t skipped_sequences = 0;  // too short for T_in + H
};

// A forecaster rolls a window of normalized [M,N] frames one step forward.
// Model-backed and persistence forecasters both fit this shape.
using Forecaster = std::function<Tensor(const std::vector<Tensor>& window)>;

Forecaster make_model_forecaster(const FrameModel& model);
Forecaster make_persistence_forecaster();

// Recursive multi-step evaluation. Sequences hold raw (denormalized) frames;
// inputs are normalized by theta_max for the forecaster and predictions are
// denormalized again, so the NRMSE normalizer matches the original field.
// An optional noise config perturbs the observed input window only.
Metrics evaluate_horizons(const Forecaster& forecaster,
                          const std::vector<std::vector<Tensor>>& sequences, int t_in,
                          int horizon, double theta_max,
                          const NoiseConfig* noise = nullptr);

struct ReportRow {
  std::string model;
  double sigma = 0.0;
  int horizon = 0;
  double nrmse = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

struct ModelUnderTest {
  std::string name;
  std::size_t parameter_count = 0;
  Forecaster forecaster;
};

struct ComparisonReport {
  std::vector<std::pair<std::string, std::size_t>> models;  // name, parameter count
  std::vector<ReportRow> rows;

  /// Mean NRMSE over horizons for one (model, sigma) slice.
  double mean_nrmse(const std::string& model, double sigma) const;
};

// Per (model, sigma): recursive evaluation on noise-injected inputs, averaged
// over `noise_seeds` realizations. Noise streams depend only on (sigma index,
// repeat, sequence), so every model sees identical corrupted inputs.
ComparisonReport robustness_sweep(const std::vector<ModelUnderTest>& models,
                                  const std::vector<std::vector<Tensor>>& sequences, int t_in,
                                  int horizon, double theta_max,
                                  const std::vector<double>& sigmas = {0.0, 0.1, 0.2},
                                  int noise_seeds = 1, std::uint64_t seed = 0);

/// Clean-input comparison (a sigma = 0 sweep with one realization).
ComparisonReport compare_models(const std::vector<ModelUnderTest>& models,
                                const std::vector<std::vector<Tensor>>& sequences, int t_in,
                                int horizon, double theta_max);

/// Rows as `model,sigma,horizon,nrmse,accuracy,n`.
void write_metrics(std::ostream& out, const ComparisonReport& report);
/// Human-readable per-model summary (parameter counts, NRMSE by horizon/sigma).
void write_summary(std::ostream& out, const ComparisonReport& report);

/// Splits a frame sequence into overlapping evaluation sequences of length
/// t_in + horizon (step = horizon to limit overlap).
std::vector<std::vector<Tensor>> make_eval_sequences(const std::vector<Tensor>& frames,
                                                     int t_in, int horizon);

}  // namespace aircast
