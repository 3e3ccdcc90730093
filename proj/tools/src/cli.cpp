#include "aircast_cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "aircast/evaluate.hpp"
#include "aircast/grid.hpp"
#include "aircast/ingest.hpp"
#include "aircast/models.hpp"
#include "aircast/optimize.hpp"
#include "aircast/parallel.hpp"
#include "aircast/run_config.hpp"
#include "aircast/serialize.hpp"
#include "aircast/synth.hpp"

namespace fs = std::filesystem;

namespace aircast::cli {

namespace {

struct CommonOpts {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "Key = value configuration file");
  cmd->add_option("--seed", opts.seed, "Seed overriding the config value")
      ->each([&opts](const std::string&) { opts.seed_set = true; });
  cmd->add_option("--threads", opts.threads, "Worker-thread cap (0 = hardware default)");
  cmd->add_flag("--deterministic", opts.deterministic,
                "Suppress timestamps so identical runs give identical bytes");
}

RunConfig load_config(const CommonOpts& opts) {
  RunConfig cfg;
  if (!opts.config_path.empty()) cfg = read_run_config_file(opts.config_path);
  if (opts.seed_set) cfg.seed = opts.seed;
  set_max_threads(opts.threads);
  return cfg;
}

std::vector<Tensor> raw_frame_values(const std::vector<HeatMapFrame>& frames) {
  std::vector<Tensor> values;
  values.reserve(frames.size());
  for (const auto& f : frames) {
    if (f.normalized)
      throw DataError("expected raw (denormalized) frames; got a normalized frame file");
    values.push_back(f.values);
  }
  return values;
}

double resolve_theta_max(double configured, const std::vector<Tensor>& frames) {
  if (configured > 0.0) return configured;
  double peak = 0.0;
  for (const auto& f : frames) peak = std::max(peak, f.max());
  if (!(peak > 0.0)) throw DataError("cannot derive theta_max: frames are all zero");
  return peak;
}

std::vector<Tensor> normalize_all(const std::vector<Tensor>& frames, double theta_max) {
  std::vector<Tensor> out;
  out.reserve(frames.size());
  for (const auto& f : frames) {
    Tensor n(f.shape());
    for (std::size_t i = 0; i < f.size(); ++i) n[i] = std::min(f[i] / theta_max, 1.0);
    out.push_back(std::move(n));
  }
  return out;
}

void ensure_parent_dir(const std::string& path) {
  fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

// per-node resampled series, nodes in first-seen order
std::vector<NodeSeries> resample_by_node(const std::vector<SensorRecord>& records,
                                         std::int64_t period) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<SensorRecord>> groups;
  for (const auto& r : records) {
    if (groups.find(r.node_id) == groups.end()) order.push_back(r.node_id);
    groups[r.node_id].push_back(r);
  }
  std::vector<NodeSeries> series;
  series.reserve(order.size());
  for (const auto& id : order) series.push_back(resample_series(groups[id], period));
  return series;
}

HeatMapFrame density_frame(const VoronoiWeightMap& weights) {
  HeatMapFrame f;
  f.values = weights.density_map();
  f.bucket = 0;
  f.normalized = false;
  return f;
}

int cmd_synth(const CommonOpts& common, const std::string& out_dir) {
  RunConfig cfg = load_config(common);
  PlumeConfig plume = cfg.plume_config();
  auto frames = simulate_plume(plume);
  fs::create_directories(out_dir);

  write_frames_file((fs::path(out_dir) / "frames.csv").string(), frames);

  Rng rng(cfg.seed);
  auto positions = random_positions(plume.grid, static_cast<std::size_t>(cfg.sensor_count),
                                    rng.fork(1).next_u64());
  auto records = sample_sensors(frames, plume.grid, positions, cfg.read_noise,
                                cfg.sensor_dropout, rng.fork(2).next_u64(),
                                plume.seconds_per_step);
  {
    std::ofstream out(fs::path(out_dir) / "sensors.csv", std::ios::binary);
    if (!out) throw DataError("cannot write sensors.csv under " + out_dir);
    write_records(out, records);
  }
  auto weights = compute_voronoi_weights(positions, plume.grid, cfg.subsamples);
  write_frames_file((fs::path(out_dir) / "density.csv").string(), {density_frame(weights)});
  std::cout << "synth: " << frames.size() << " frames, " << records.size()
            << " sensor records -> " << out_dir << "\n";
  return 0;
}

int cmd_ingest(const CommonOpts& common, const std::string& input, const std::string& out) {
  RunConfig cfg = load_config(common);
  auto records = read_records_file(input);
  if (records.empty()) throw DataError("ingest: no records in " + input);
  auto series = resample_by_node(records, cfg.resample_period);
  ensure_parent_dir(out);
  std::ofstream os(out, std::ios::binary);
  if (!os) throw DataError("cannot open output file: " + out);
  write_series(os, series);
  std::cout << "ingest: " << series.size() << " node series -> " << out << "\n";
  return 0;
}

int cmd_rasterize(const CommonOpts& common, const std::string& input, const std::string& out,
                  const std::string& fill_flag) {
  RunConfig cfg = load_config(common);
  if (!fill_flag.empty()) {
    if (fill_flag != "none" && fill_flag != "nearest")
      throw UsageError("--fill must be none or nearest");
    cfg.fill = fill_flag;
  }
  GridSpec grid = cfg.grid_spec();
  auto records = read_records_file(input);
  if (records.empty()) throw DataError("rasterize: no records in " + input);
  auto series = resample_by_node(records, cfg.resample_period);

  std::vector<GeoPoint> positions;
  positions.reserve(series.size());
  for (const auto& s : series) positions.push_back({s.latitude, s.longitude});
  auto weights = compute_voronoi_weights(positions, grid, cfg.subsamples);

  std::int64_t lo = series.front().start_bucket;
  std::int64_t hi = series.front().bucket_at(series.front().length() - 1);
  for (const auto& s : series) {
    lo = std::min(lo, s.start_bucket);
    hi = std::max(hi, s.bucket_at(s.length() - 1));
  }
  std::vector<HeatMapFrame> frames;
  frames.reserve(static_cast<std::size_t>(hi - lo + 1));
  for (std::int64_t bucket = lo; bucket <= hi; ++bucket) {
    std::vector<std::optional<double>> readings(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
      const auto& s = series[i];
      if (bucket >= s.start_bucket && bucket <= s.bucket_at(s.length() - 1))
        readings[i] = s.values[static_cast<std::size_t>(bucket - s.start_bucket)];
    }
    frames.push_back(rasterize_frame(readings, weights, bucket, cfg.fill_mode()));
  }
  ensure_parent_dir(out);
  write_frames_file(out, frames);
  fs::path density_path = fs::path(out).parent_path() / "density.csv";
  write_frames_file(density_path.string(), {density_frame(weights)});
  std::cout << "rasterize: " << frames.size() << " frames (" << grid.rows << "x" << grid.cols
            << ") -> " << out << "\n";
  return 0;
}

FrameModel build_from_config(const RunConfig& cfg, const Tensor& geography) {
  if (cfg.model == "crnn") return build_crnn(cfg.crnn_config(geography), cfg.seed);
  return build_comparator(cfg.comparator_config(), cfg.seed);
}

int cmd_train(const CommonOpts& common, const std::string& frames_path,
              const std::string& out, const std::string& geography_path,
              const std::string& history_path) {
  RunConfig cfg = load_config(common);
  auto frames = raw_frame_values(read_frames_file(frames_path));
  if (frames.size() < static_cast<std::size_t>(cfg.t_in) + 2)
    throw DataError("train: not enough frames for t_in = " + std::to_string(cfg.t_in));

  const double theta_max = resolve_theta_max(cfg.theta_max, frames);
  auto normalized = normalize_all(frames, theta_max);
  auto [train_frames, val_frames] = split_series(normalized, cfg.train_fraction);
  auto train_windows = make_frame_windows(train_frames, cfg.t_in, cfg.window_stride);
  auto val_windows = make_frame_windows(val_frames, cfg.t_in, cfg.window_stride);
  if (train_windows.empty()) throw DataError("train: no training windows (series too short)");

  Tensor geography;
  if (!geography_path.empty()) {
    auto geo_frames = read_frames_file(geography_path);
    if (geo_frames.empty()) throw DataError("train: empty geography file");
    geography = geo_frames.front().values;
  }

  FrameModel model = build_from_config(cfg, geography);
  model.theta_max = theta_max;

  ensure_parent_dir(out);
  TrainConfig tc = cfg.train_config();
  auto checkpoint = [&](int epoch, const FrameModel& m) {
    char suffix[32];
    std::snprintf(suffix, sizeof(suffix), ".epoch%05d", epoch);
    save_frame_model(out + suffix, m, !common.deterministic);
  };
  TrainHistory history =
      train_frame_model(model, train_windows, val_windows, tc,
                        tc.checkpoint_every > 0
                            ? std::function<void(int, const FrameModel&)>(checkpoint)
                            : std::function<void(int, const FrameModel&)>{});

  save_frame_model(out, model, !common.deterministic);
  const std::string hist = history_path.empty() ? out + ".history.csv" : history_path;
  ensure_parent_dir(hist);
  std::ofstream hs(hist, std::ios::binary);
  if (!hs) throw DataError("cannot open history file: " + hist);
  write_history(hs, history);
  std::cout << "train: " << cfg.model << " on " << train_windows.size() << " windows, "
            << history.size() << " epochs, final train loss "
            << (history.empty() ? 0.0 : history.back().train_loss) << " -> " << out << "\n";
  return 0;
}

int cmd_predict(const CommonOpts& common, const std::string& model_path,
                const std::string& frames_path, int horizon, const std::string& out) {
  load_config(common);
  FrameModel model = load_frame_model(model_path);
  auto frames = raw_frame_values(read_frames_file(frames_path));
  const auto t_in = static_cast<std::size_t>(model.t_in());
  if (frames.size() < t_in)
    throw DataError("predict: need at least " + std::to_string(t_in) + " frames");
  std::vector<Tensor> window(frames.end() - static_cast<std::ptrdiff_t>(t_in), frames.end());
  window = normalize_all(window, model.theta_max);
  auto predictions = recursive_forecast(model, window, horizon);

  std::vector<HeatMapFrame> out_frames;
  const auto frames_file = read_frames_file(frames_path);
  std::int64_t next_bucket = frames_file.back().bucket + 1;
  for (auto& p : predictions) {
    HeatMapFrame f;
    f.values = Tensor(p.shape());
    for (std::size_t i = 0; i < p.size(); ++i) f.values[i] = p[i] * model.theta_max;
    f.bucket = next_bucket++;
    f.normalized = false;
    out_frames.push_back(std::move(f));
  }
  ensure_parent_dir(out);
  write_frames_file(out, out_frames);
  std::cout << "predict: " << horizon << " frames -> " << out << "\n";
  return 0;
}

std::vector<ModelUnderTest> load_models(const std::vector<std::string>& paths,
                                        std::vector<FrameModel>& storage,
                                        bool with_persistence) {
  storage.clear();
  storage.reserve(paths.size());
  std::vector<ModelUnderTest> models;
  for (const auto& p : paths) storage.push_back(load_frame_model(p));
  for (auto& m : storage)
    models.push_back({to_string(m.kind), count_parameters(m), make_model_forecaster(m)});
  if (with_persistence) models.push_back({"persistence", 0, make_persistence_forecaster()});
  return models;
}

double common_theta_max(const std::vector<FrameModel>& models) {
  if (models.empty()) throw UsageError("at least one --model is required");
  double theta = models.front().theta_max;
  for (const auto& m : models)
    if (std::abs(m.theta_max - theta) > 1e-9 * std::max(1.0, theta))
      throw DataError("models disagree on theta_max; evaluate them separately");
  return theta;
}

int cmd_eval(const CommonOpts& common, const std::string& model_path,
             const std::string& frames_path, int horizon, const std::string& out) {
  load_config(common);
  std::vector<FrameModel> storage;
  auto models = load_models({model_path}, storage, false);
  auto frames = raw_frame_values(read_frames_file(frames_path));
  auto sequences = make_eval_sequences(frames, storage.front().t_in(), horizon);
  if (sequences.empty()) throw DataError("eval: test series shorter than t_in + horizon");
  auto report = compare_models(models, sequences, storage.front().t_in(), horizon,
                               common_theta_max(storage));
  ensure_parent_dir(out);
  std::ofstream os(out, std::ios::binary);
  if (!os) throw DataError("cannot open output file: " + out);
  write_metrics(os, report);
  write_summary(std::cout, report);
  return 0;
}

int cmd_robustness(const CommonOpts& common, const std::vector<std::string>& model_paths,
                   const std::string& frames_path, int horizon,
                   const std::string& sigmas_flag, bool with_persistence,
                   const std::string& out) {
  RunConfig cfg = load_config(common);
  std::vector<double> sigmas = cfg.sigmas;
  if (!sigmas_flag.empty()) {
    sigmas.clear();
    std::istringstream in(sigmas_flag);
    std::string item;
    while (std::getline(in, item, ','))
      sigmas.push_back(std::stod(item));
  }
  std::vector<FrameModel> storage;
  auto models = load_models(model_paths, storage, with_persistence);
  auto frames = raw_frame_values(read_frames_file(frames_path));
  const int t_in = storage.front().t_in();
  auto sequences = make_eval_sequences(frames, t_in, horizon);
  if (sequences.empty()) throw DataError("robustness: test series shorter than t_in + horizon");
  auto report = robustness_sweep(models, sequences, t_in, horizon, common_theta_max(storage),
                                 sigmas, cfg.noise_seeds, cfg.seed);
  ensure_parent_dir(out);
  std::ofstream os(out, std::ios::binary);
  if (!os) throw DataError("cannot open output file: " + out);
  write_metrics(os, report);
  write_summary(std::cout, report);
  return 0;
}

int cmd_compare(const CommonOpts& common, const std::vector<std::string>& model_paths,
                const std::string& frames_path, int horizon, const std::string& out) {
  load_config(common);
  std::vector<FrameModel> storage;
  auto models = load_models(model_paths, storage, true);
  auto frames = raw_frame_values(read_frames_file(frames_path));
  const int t_in = storage.front().t_in();
  auto sequences = make_eval_sequences(frames, t_in, horizon);
  if (sequences.empty()) throw DataError("compare: test series shorter than t_in + horizon");
  auto report = compare_models(models, sequences, t_in, horizon, common_theta_max(storage));
  ensure_parent_dir(out);
  std::ofstream os(out, std::ios::binary);
  if (!os) throw DataError("cannot open output file: " + out);
  write_metrics(os, report);
  write_summary(std::cout, report);
  return 0;
}

int cmd_export_maps(const CommonOpts& common, const std::string& model_path,
                    const std::string& frames_path, int horizon, std::size_t sequence_index,
                    const std::string& out_dir) {
  load_config(common);
  FrameModel model = load_frame_model(model_path);
  auto frames = raw_frame_values(read_frames_file(frames_path));
  auto sequences = make_eval_sequences(frames, model.t_in(), horizon);
  if (sequences.empty())
    throw DataError("export-maps: test series shorter than t_in + horizon");
  if (sequence_index >= sequences.size())
    throw DataError("export-maps: sequence index out of range (have " +
                    std::to_string(sequences.size()) + ")");
  const auto& seq = sequences[sequence_index];
  const auto t_in = static_cast<std::size_t>(model.t_in());
  std::vector<Tensor> window(seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(t_in));
  window = normalize_all(window, model.theta_max);
  auto predictions = recursive_forecast(model, window, horizon);

  fs::create_directories(out_dir);
  char name[64];
  for (int h = 0; h < horizon; ++h) {
    const Tensor& truth_raw = seq[t_in + static_cast<std::size_t>(h)];
    Tensor truth(truth_raw.shape());
    for (std::size_t i = 0; i < truth.size(); ++i)
      truth[i] = std::min(truth_raw[i] / model.theta_max, 1.0);
    const Tensor& pred = predictions[static_cast<std::size_t>(h)];
    Tensor error(pred.shape());
    for (std::size_t i = 0; i < error.size(); ++i) error[i] = std::abs(truth[i] - pred[i]);

    auto emit = [&](const char* tag, const Tensor& values) {
      HeatMapFrame f;
      f.values = values;
      f.bucket = h + 1;
      f.normalized = true;
      std::snprintf(name, sizeof(name), "%s_h%02d.pgm", tag, h + 1);
      write_pgm_file((fs::path(out_dir) / name).string(), f);
    };
    emit("truth", truth);
    emit("pred", pred);
    emit("error", error);
  }
  std::cout << "export-maps: " << 3 * horizon << " graymaps -> " << out_dir << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"aircast: spatiotemporal PM2.5 heat-map forecasting toolkit"};
  app.require_subcommand(1);

  CommonOpts common;
  std::string out;
  std::string input;
  std::string frames_path;
  std::string model_path;
  std::vector<std::string> model_paths;
  std::string geography_path;
  std::string history_path;
  std::string fill_flag;
  std::string sigmas_flag;
  bool with_persistence = false;
  int horizon = 12;
  std::size_t sequence_index = 0;

  auto* synth = app.add_subcommand("synth", "Simulate a plume and virtual sensor records");
  add_common(synth, common);
  synth->add_option("--out", out, "Output directory")->required();

  auto* ingest = app.add_subcommand("ingest", "Resample raw sensor records onto the bucket grid");
  add_common(ingest, common);
  ingest->add_option("--input", input, "Sensor records CSV")->required();
  ingest->add_option("--out", out, "Resampled series CSV")->required();

  auto* rasterize = app.add_subcommand("rasterize", "Voronoi-aggregate records into heat maps");
  add_common(rasterize, common);
  rasterize->add_option("--input", input, "Sensor records CSV")->required();
  rasterize->add_option("--out", out, "Output frames file")->required();
  rasterize->add_option("--fill", fill_flag, "Nodeless sectors: none (default) or nearest");

  auto* train = app.add_subcommand("train", "Train a frame model on a heat-map sequence");
  add_common(train, common);
  train->add_option("--frames", frames_path, "Training frames file")->required();
  train->add_option("--out", out, "Output model file")->required();
  train->add_option("--geography", geography_path, "Static geography frame file (crnn)");
  train->add_option("--history", history_path, "Training history CSV (default <out>.history.csv)");

  auto* predict = app.add_subcommand("predict", "Recursive multi-step forecast");
  add_common(predict, common);
  predict->add_option("--model", model_path, "Trained model file")->required();
  predict->add_option("--frames", frames_path, "Observed frames file")->required();
  predict->add_option("--horizon", horizon, "Steps ahead (default 12)");
  predict->add_option("--out", out, "Output frames file")->required();

  auto* eval = app.add_subcommand("eval", "Per-horizon NRMSE on a test series");
  add_common(eval, common);
  eval->add_option("--model", model_path, "Trained model file")->required();
  eval->add_option("--frames", frames_path, "Test frames file")->required();
  eval->add_option("--horizons", horizon, "Max horizon (default 12)");
  eval->add_option("--out", out, "Metrics table output")->required();

  auto* robust = app.add_subcommand("robustness", "Noise-robustness sweep over sigma");
  add_common(robust, common);
  robust->add_option("--models", model_paths, "Trained model files")->required();
  robust->add_option("--frames", frames_path, "Test frames file")->required();
  robust->add_option("--horizons", horizon, "Max horizon (default 12)");
  robust->add_option("--sigmas", sigmas_flag, "Comma-separated sigma list (default from config)");
  robust->add_flag("--with-persistence", with_persistence, "Include the persistence baseline");
  robust->add_option("--out", out, "Metrics table output")->required();

  auto* compare = app.add_subcommand("compare", "Side-by-side model comparison");
  add_common(compare, common);
  compare->add_option("--models", model_paths, "Trained model files")->required();
  compare->add_option("--frames", frames_path, "Test frames file")->required();
  compare->add_option("--horizons", horizon, "Max horizon (default 12)");
  compare->add_option("--out", out, "Metrics table output")->required();

  auto* export_maps = app.add_subcommand("export-maps", "P5 graymaps of truth/prediction/error");
  add_common(export_maps, common);
  export_maps->add_option("--model", model_path, "Trained model file")->required();
  export_maps->add_option("--frames", frames_path, "Test frames file")->required();
  export_maps->add_option("--horizon", horizon, "Steps ahead (default 12)");
  export_maps->add_option("--sequence", sequence_index, "Evaluation sequence index");
  export_maps->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(common, out);
    if (ingest->parsed()) return cmd_ingest(common, input, out);
    if (rasterize->parsed()) return cmd_rasterize(common, input, out, fill_flag);
    if (train->parsed())
      return cmd_train(common, frames_path, out, geography_path, history_path);
    if (predict->parsed()) return cmd_predict(common, model_path, frames_path, horizon, out);
    if (eval->parsed()) return cmd_eval(common, model_path, frames_path, horizon, out);
    if (robust->parsed())
      return cmd_robustness(common, model_paths, frames_path, horizon, sigmas_flag,
                            with_persistence, out);
    if (compare->parsed())
      return cmd_compare(common, model_paths, frames_path, horizon, out);
    if (export_maps->parsed())
      return cmd_export_maps(common, model_path, frames_path, horizon, sequence_index, out);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace aircast::cli
