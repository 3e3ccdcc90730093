#include "aircast/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "aircast/parallel.hpp"

namespace aircast {

double nrmse(const Tensor& prediction, const Tensor& truth) {
  if (!prediction.same_shape(truth))
    throw DataError("nrmse: shape mismatch " + prediction.shape_string() + " vs " +
                    truth.shape_string());
  if (truth.size() == 0) throw DataError("nrmse: empty tensors");
  const double mean = truth.mean();
  if (!(mean > 0.0))
    throw DataError("nrmse: ground-truth mean must be positive (got " + std::to_string(mean) +
                    ")");
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = truth[i] - prediction[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(truth.size())) / mean;
}

std::vector<Tensor> add_noise(const std::vector<Tensor>& frames, const NoiseConfig& config) {
  if (config.sigma < 0.0) throw DataError("add_noise: sigma must be >= 0");
  if (config.sigma == 0.0) return frames;
  Rng rng(config.seed);
  std::vector<Tensor> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    Tensor noisy(f.shape());
    for (std::size_t i = 0; i < f.size(); ++i)
      noisy[i] = std::clamp(f[i] + rng.next_gaussian() * config.sigma, 0.0, 1.0);
    out.push_back(std::move(noisy));
  }
  return out;
}

Forecaster make_model_forecaster(const FrameModel& model) {
  return [&model](const std::vector<Tensor>& window) { return frame_predict(model, window); };
}

Forecaster make_persistence_forecaster() {
  return [](const std::vector<Tensor>& window) { return window.back(); };
}

Metrics evaluate_horizons(const Forecaster& forecaster,
                          const std::vector<std::vector<Tensor>>& sequences, int t_in,
                          int horizon, double theta_max, const NoiseConfig* noise) {
  if (t_in < 1 || horizon < 1) throw DataError("evaluate_horizons: t_in and horizon >= 1");
  if (!(theta_max > 0.0)) throw DataError("evaluate_horizons: theta_max must be positive");
  const auto need = static_cast<std::size_t>(t_in) + static_cast<std::size_t>(horizon);

  std::vector<const std::vector<Tensor>*> usable;
  std::size_t skipped = 0;
  for (const auto& seq : sequences) {
    if (seq.size() < need)
      ++skipped;
    else
      usable.push_back(&seq);
  }

  // per-sequence NRMSE table, filled in parallel, reduced in sequence order
  std::vector<std::vector<double>> table(usable.size());
  parallel_for(usable.size(), [&](std::size_t s) {
    const auto& seq = *usable[s];
    std::vector<Tensor> window;
    window.reserve(static_cast<std::size_t>(t_in));
    for (int t = 0; t < t_in; ++t) {
      Tensor norm(seq[static_cast<std::size_t>(t)].shape());
      for (std::size_t i = 0; i < norm.size(); ++i)
        norm[i] = std::min(seq[static_cast<std::size_t>(t)][i] / theta_max, 1.0);
      window.push_back(std::move(norm));
    }
    if (noise && noise->sigma > 0.0) {
      NoiseConfig per_seq = *noise;
      per_seq.seed = mix64(noise->seed ^ mix64(s + 1));
      window = add_noise(window, per_seq);
    }
    auto& row = table[s];
    row.reserve(static_cast<std::size_t>(horizon));
    for (int h = 0; h < horizon; ++h) {
      Tensor pred_norm = forecaster(window);
      window.erase(window.begin());
      window.push_back(pred_norm);
      Tensor pred(pred_norm.shape());
      for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = pred_norm[i] * theta_max;
      row.push_back(nrmse(pred, seq[static_cast<std::size_t>(t_in + h)]));
    }
  });

  Metrics metrics;
  metrics.skipped_sequences = skipped;
  metrics.per_horizon.resize(static_cast<std::size_t>(horizon));
  for (int h = 0; h < horizon; ++h) {
    auto& m = metrics.per_horizon[static_cast<std::size_t>(h)];
    m.horizon = h + 1;
    double sum = 0.0;
    for (const auto& row : table) sum += row[static_cast<std::size_t>(h)];
    m.count = table.size();
    m.nrmse = table.empty() ? 0.0 : sum / static_cast<double>(table.size());
    m.accuracy = 1.0 - m.nrmse;
  }
  return metrics;
}

double ComparisonReport::mean_nrmse(const std::string& model, double sigma) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& row : rows)
    if (row.model == model && row.sigma == sigma) {
      sum += row.nrmse;
      ++n;
    }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

ComparisonReport robustness_sweep(const std::vector<ModelUnderTest>& models,
                                  const std::vector<std::vector<Tensor>>& sequences, int t_in,
                                  int horizon, double theta_max,
                                  const std::vector<double>& sigmas, int noise_seeds,
                                  std::uint64_t seed) {
  if (noise_seeds < 1) throw DataError("robustness_sweep: noise_seeds must be >= 1");
  ComparisonReport report;
  for (const auto& m : models) report.models.emplace_back(m.name, m.parameter_count);
  for (std::size_t si = 0; si < sigmas.size(); ++si) {
    const double sigma = sigmas[si];
    for (const auto& m : models) {
      // accumulate horizon rows over noise repeats; identical noise streams
      // across models because the seed only involves (sigma, repeat)
      std::vector<double> sums(static_cast<std::size_t>(horizon), 0.0);
      std::size_t count = 0;
      std::size_t skipped = 0;
      for (int rep = 0; rep < (sigma > 0.0 ? noise_seeds : 1); ++rep) {
        NoiseConfig noise;
        noise.sigma = sigma;
        noise.seed = mix64(seed ^ mix64((si << 20) + static_cast<std::size_t>(rep) + 1));
        Metrics metrics =
            evaluate_horizons(m.forecaster, sequences, t_in, horizon, theta_max,
                              sigma > 0.0 ? &noise : nullptr);
        for (std::size_t h = 0; h < sums.size(); ++h) sums[h] += metrics.per_horizon[h].nrmse;
        count = metrics.per_horizon.empty() ? 0 : metrics.per_horizon.front().count;
        skipped = metrics.skipped_sequences;
        (void)skipped;
      }
      const double reps = sigma > 0.0 ? static_cast<double>(noise_seeds) : 1.0;
      for (std::size_t h = 0; h < sums.size(); ++h) {
        ReportRow row;
        row.model = m.name;
        row.sigma = sigma;
        row.horizon = static_cast<int>(h) + 1;
        row.nrmse = sums[h] / reps;
        row.accuracy = 1.0 - row.nrmse;
        row.count = count;
        report.rows.push_back(std::move(row));
      }
    }
  }
  return report;
}

ComparisonReport compare_models(const std::vector<ModelUnderTest>& models,
                                const std::vector<std::vector<Tensor>>& sequences, int t_in,
                                int horizon, double theta_max) {
  return robustness_sweep(models, sequences, t_in, horizon, theta_max, {0.0}, 1, 0);
}

void write_metrics(std::ostream& out, const ComparisonReport& report) {
  out << "model,sigma,horizon,nrmse,accuracy,n\n";
  char buf[160];
  for (const auto& row : report.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%d,%.17g,%.17g,%zu\n", row.model.c_str(),
                  row.sigma, row.horizon, row.nrmse, row.accuracy, row.count);
    out << buf;
  }
}

void write_summary(std::ostream& out, const ComparisonReport& report) {
  out << "model parameters:\n";
  for (const auto& [name, count] : report.models)
    out << "  " << name << ": " << count << " trainable parameters\n";
  // collect sigma values in row order
  std::vector<double> sigmas;
  for (const auto& row : report.rows)
    if (std::find(sigmas.begin(), sigmas.end(), row.sigma) == sigmas.end())
      sigmas.push_back(row.sigma);
  for (double sigma : sigmas) {
    out << "noise sigma = " << sigma << ":\n";
    for (const auto& [name, count] : report.models) {
      out << "  " << name << ": mean NRMSE " << report.mean_nrmse(name, sigma)
          << " (accuracy " << 1.0 - report.mean_nrmse(name, sigma) << ")\n";
    }
  }
}

std::vector<std::vector<Tensor>> make_eval_sequences(const std::vector<Tensor>& frames,
                                                     int t_in, int horizon) {
  if (t_in < 1 || horizon < 1) throw DataError("make_eval_sequences: t_in and horizon >= 1");
  const auto need = static_cast<std::size_t>(t_in) + static_cast<std::size_t>(horizon);
  std::vector<std::vector<Tensor>> sequences;
  if (frames.size() < need) return sequences;
  for (std::size_t start = 0; start + need <= frames.size();
       start += static_cast<std::size_t>(horizon))
    sequences.emplace_back(frames.begin() + static_cast<std::ptrdiff_t>(start),
                           frames.begin() + static_cast<std::ptrdiff_t>(start + need));
  return sequences;
}

}  // namespace aircast
