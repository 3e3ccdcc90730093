#include "aircast/models.hpp"

#include <algorithm>
#include <cmath>

namespace aircast {

namespace {

double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

Tensor uniform_init(std::vector<std::size_t> shape, Rng& rng, double limit) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_uniform(-limit, limit);
  return t;
}

Tensor dense_init(std::size_t in, std::size_t out, Rng& rng) {
  return uniform_init({in, out}, rng, glorot_limit(in, out));
}

Tensor conv_init(std::size_t kh, std::size_t kw, std::size_t ci, std::size_t co, Rng& rng) {
  return uniform_init({kh, kw, ci, co}, rng, glorot_limit(kh * kw * ci, kh * kw * co));
}

Tensor conv3d_init(std::size_t kt, std::size_t kh, std::size_t kw, std::size_t ci,
                   std::size_t co, Rng& rng) {
  return uniform_init({kt, kh, kw, ci, co}, rng,
                      glorot_limit(kt * kh * kw * ci, kt * kh * kw * co));
}

int gates_per_cell(CellKind cell) {
  switch (cell) {
    case CellKind::SimpleRnn: return 1;
    case CellKind::Gru: return 3;
    case CellKind::Lstm: return 4;
  }
  return 1;
}

// dense(x,w,b) + dense(h,u,-): the shared pre-activation of every cell kind
Var cell_preact(Graph& g, const Var& x, const Var& h, const Var& w, const Var& u,
                const Var& b) {
  return add(g, dense(g, x, w, b), dense(g, h, u, nullptr));
}

struct DenseLstmStep {
  Var h, c;
};

DenseLstmStep dense_lstm_step(Graph& g, const Var& x, const Var& h, const Var& c, const Var& w,
                              const Var& u, const Var& b, std::size_t hidden) {
  Var gates = cell_preact(g, x, h, w, u, b);  // [B, 4H], gate order i,f,g,o
  Var gi = sigmoid(g, slice_channels(g, gates, 0, hidden));
  Var gf = sigmoid(g, slice_channels(g, gates, hidden, hidden));
  Var gg = tanh_act(g, slice_channels(g, gates, 2 * hidden, hidden));
  Var go = sigmoid(g, slice_channels(g, gates, 3 * hidden, hidden));
  Var c_next = add(g, mul(g, gf, c), mul(g, gi, gg));
  Var h_next = mul(g, go, tanh_act(g, c_next));
  return {h_next, c_next};
}

// Reset-after GRU (decoupled input/recurrent biases); this is the
// parameterization that reproduces the published counts.
Var dense_gru_step(Graph& g, const Var& x, const Var& h, const Var& w, const Var& u,
                   const Var& b_in, const Var& b_rec, std::size_t hidden) {
  Var xg = dense(g, x, w, b_in);    // [B, 3H], gate order z,r,h
  Var hg = dense(g, h, u, b_rec);
  Var z = sigmoid(g, add(g, slice_channels(g, xg, 0, hidden),
                         slice_channels(g, hg, 0, hidden)));
  Var r = sigmoid(g, add(g, slice_channels(g, xg, hidden, hidden),
                         slice_channels(g, hg, hidden, hidden)));
  Var hh = tanh_act(g, add(g, slice_channels(g, xg, 2 * hidden, hidden),
                           mul(g, r, slice_channels(g, hg, 2 * hidden, hidden))));
  // h' = z.h + (1-z).hh
  Var keep = mul(g, z, h);
  Var update = sub(g, hh, mul(g, z, hh));
  return add(g, keep, update);
}

void check_baseline_config(const BaselineConfig& c) {
  if (c.num_layers < 1 || c.num_layers > 5)
    throw DataError("build_baseline: num_layers must be in [1, 5]");
  if (c.channels < 1 || c.channels > 4)
    throw DataError("build_baseline: channels must be in [1, 4]");
  if (c.hidden < 1 || c.t_in < 1) throw DataError("build_baseline: invalid config");
  if (c.dropout < 0.0 || c.dropout >= 1.0)
    throw DataError("build_baseline: dropout must be in [0, 1)");
}

}  // namespace

std::vector<Var> make_param_vars(Graph& g, const std::vector<Param>& params,
                                 bool requires_grad) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(g.leaf(p.value, requires_grad));
  return vars;
}

// --- baselines ----------------------------------------------------------------

BaselineModel build_baseline(const BaselineConfig& config, std::uint64_t seed) {
  check_baseline_config(config);
  BaselineModel model;
  model.config = config;
  model.seed = seed;
  Rng rng(seed);
  const auto h = static_cast<std::size_t>(config.hidden);
  const int gates = gates_per_cell(config.cell);
  for (int layer = 0; layer < config.num_layers; ++layer) {
    const std::size_t in = layer == 0 ? static_cast<std::size_t>(config.channels) : h;
    const std::string prefix = "layer" + std::to_string(layer) + ".";
    model.params.push_back({prefix + "w", dense_init(in, gates * h, rng)});
    model.params.push_back({prefix + "u", dense_init(h, gates * h, rng)});
    if (config.cell == CellKind::Gru) {
      model.params.push_back({prefix + "b_in", Tensor({gates * h})});
      model.params.push_back({prefix + "b_rec", Tensor({gates * h})});
    } else {
      model.params.push_back({prefix + "b", Tensor({gates * h})});
    }
  }
  model.params.push_back({"head.w", dense_init(h, 1, rng)});
  model.params.push_back({"head.b", Tensor({1})});
  return model;
}

Var baseline_forward(Graph& g, const BaselineModel& model, const std::vector<Var>& params,
                     const Tensor& x, Rng* dropout_rng, bool training) {
  const auto& cfg = model.config;
  if (x.rank() != 3 || x.dim(1) != static_cast<std::size_t>(cfg.t_in) ||
      x.dim(2) != static_cast<std::size_t>(cfg.channels))
    throw DataError("baseline_forward: expected window batch [B," + std::to_string(cfg.t_in) +
                    "," + std::to_string(cfg.channels) + "], got " + x.shape_string());
  const std::size_t batch = x.dim(0);
  const auto hidden = static_cast<std::size_t>(cfg.hidden);
  const std::size_t per_layer = cfg.cell == CellKind::Gru ? 4 : 3;
  Rng fallback_rng(model.seed);
  Rng& drng = dropout_rng ? *dropout_rng : fallback_rng;

  Var seq = g.constant(x);
  for (int layer = 0; layer < cfg.num_layers; ++layer) {
    const std::size_t base = static_cast<std::size_t>(layer) * per_layer;
    Var h = g.constant(Tensor({batch, hidden}));
    Var c = g.constant(Tensor({batch, hidden}));
    std::vector<Var> outs;
    outs.reserve(static_cast<std::size_t>(cfg.t_in));
    for (int t = 0; t < cfg.t_in; ++t) {
      Var xt = time_slice(g, seq, static_cast<std::size_t>(t));
      switch (cfg.cell) {
        case CellKind::SimpleRnn:
          h = tanh_act(g, cell_preact(g, xt, h, params[base], params[base + 1],
                                      params[base + 2]));
          break;
        case CellKind::Gru:
          h = dense_gru_step(g, xt, h, params[base], params[base + 1], params[base + 2],
                             params[base + 3], hidden);
          break;
        case CellKind::Lstm: {
          auto step = dense_lstm_step(g, xt, h, c, params[base], params[base + 1],
                                      params[base + 2], hidden);
          h = step.h;
          c = step.c;
          break;
        }
      }
      outs.push_back(h);
    }
    if (layer + 1 < cfg.num_layers) {
      seq = time_stack(g, outs);
      seq = dropout(g, seq, cfg.dropout, drng, training);
    } else {
      seq = outs.back();  // last hidden state feeds the head
    }
  }
  const std::size_t head = params.size() - 2;
  return dense(g, seq, params[head], params[head + 1]);
}

double forward_baseline(const BaselineModel& model,
                        const std::vector<std::vector<double>>& window) {
  const auto& cfg = model.config;
  if (window.size() != static_cast<std::size_t>(cfg.t_in))
    throw DataError("forward_baseline: window length " + std::to_string(window.size()) +
                    " != t_in " + std::to_string(cfg.t_in));
  Tensor x({1, static_cast<std::size_t>(cfg.t_in), static_cast<std::size_t>(cfg.channels)});
  for (std::size_t t = 0; t < window.size(); ++t) {
    if (window[t].size() != static_cast<std::size_t>(cfg.channels))
      throw DataError("forward_baseline: channel count mismatch in window");
    for (std::size_t ch = 0; ch < window[t].size(); ++ch)
      x[t * cfg.channels + ch] = window[t][ch];
  }
  Graph g(false);
  auto params = make_param_vars(g, model.params, false);
  Var out = baseline_forward(g, model, params, x, nullptr, false);
  return out->value[0];
}

std::vector<double> recursive_forecast(const BaselineModel& model,
                                       std::vector<std::vector<double>> window, int horizon) {
  if (horizon < 1) throw DataError("recursive_forecast: horizon must be >= 1");
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(horizon));
  for (int hstep = 0; hstep < horizon; ++hstep) {
    double v = forward_baseline(model, window);
    out.push_back(v);
    std::vector<double> next_row = window.back();  // hold-last for neighbor channels
    next_row[0] = v;
    window.erase(window.begin());
    window.push_back(std::move(next_row));
  }
  return out;
}

// --- frame models ----------------------------------------------------------------

std::string to_string(FrameModelKind kind) {
  switch (kind) {
    case FrameModelKind::Nn: return "nn";
    case FrameModelKind::Lstm: return "lstm";
    case FrameModelKind::Cnn: return "cnn";
    case FrameModelKind::ConvLstm: return "convlstm";
    case FrameModelKind::Crnn: return "crnn";
  }
  return "?";
}

std::optional<FrameModelKind> frame_model_kind_from(const std::string& name) {
  if (name == "nn") return FrameModelKind::Nn;
  if (name == "lstm") return FrameModelKind::Lstm;
  if (name == "cnn") return FrameModelKind::Cnn;
  if (name == "convlstm") return FrameModelKind::ConvLstm;
  if (name == "crnn") return FrameModelKind::Crnn;
  return std::nullopt;
}

FrameModel build_crnn(const CrnnConfig& config, std::uint64_t seed) {
  if (config.rows < 1 || config.cols < 1 || config.t_in < 1)
    throw DataError("build_crnn: invalid grid/window");
  if (config.block_filters < 1 || config.penultimate_filters < 1)
    throw DataError("build_crnn: filter counts must be >= 1");
  if (config.kernel < 1 || config.kernel % 2 == 0)
    throw DataError("build_crnn: kernel must be odd");
  if (!config.geography.empty() &&
      (config.geography.rank() != 2 ||
       config.geography.dim(0) != static_cast<std::size_t>(config.rows) ||
       config.geography.dim(1) != static_cast<std::size_t>(config.cols)))
    throw DataError("build_crnn: geography map shape mismatch (want [" +
                    std::to_string(config.rows) + "," + std::to_string(config.cols) + "])");

  FrameModel model;
  model.kind = FrameModelKind::Crnn;
  model.crnn = config;
  model.seed = seed;
  Rng rng(seed);
  const auto k = static_cast<std::size_t>(config.kernel);
  const auto f = static_cast<std::size_t>(config.block_filters);
  const auto p = static_cast<std::size_t>(config.penultimate_filters);

  std::size_t in_ch = 1;
  for (int block = 0; block < 4; ++block) {
    const std::string prefix = "block" + std::to_string(block) + ".";
    const std::size_t lstm_f = block == 3 ? p : f;
    model.params.push_back({prefix + "conv.k", conv_init(k, k, in_ch, f, rng)});
    model.params.push_back({prefix + "conv.b", Tensor({f})});
    model.params.push_back({prefix + "convlstm.w", conv_init(k, k, f, 4 * lstm_f, rng)});
    model.params.push_back({prefix + "convlstm.u", conv_init(k, k, lstm_f, 4 * lstm_f, rng)});
    model.params.push_back({prefix + "convlstm.b", Tensor({4 * lstm_f})});
    in_ch = lstm_f;
  }
  model.params.push_back({"bn.gamma", Tensor({p}, 1.0)});
  model.params.push_back({"bn.beta", Tensor({p})});
  model.params.push_back({"out.conv3d.k", conv3d_init(3, k, k, p + 1, 1, rng)});
  model.params.push_back({"out.conv3d.b", Tensor({1})});

  model.bn.running_mean = Tensor({p});
  model.bn.running_var = Tensor({p}, 1.0);
  model.bn.momentum = config.bn_momentum;
  return model;
}

FrameModel build_comparator(const ComparatorConfig& config, std::uint64_t seed) {
  if (config.kind == FrameModelKind::Crnn)
    throw DataError("build_comparator: use build_crnn for the crnn kind");
  if (config.rows < 1 || config.cols < 1 || config.t_in < 1 || config.filters < 1 ||
      config.hidden < 1 || config.kernel < 1 || config.kernel % 2 == 0)
    throw DataError("build_comparator: invalid config");
  FrameModel model;
  model.kind = config.kind;
  model.comp = config;
  model.seed = seed;
  Rng rng(seed);
  const auto k = static_cast<std::size_t>(config.kernel);
  const auto f = static_cast<std::size_t>(config.filters);
  const auto h = static_cast<std::size_t>(config.hidden);
  const auto t = static_cast<std::size_t>(config.t_in);
  switch (config.kind) {
    case FrameModelKind::Nn:
      model.params.push_back({"fc1.w", dense_init(t, h, rng)});
      model.params.push_back({"fc1.b", Tensor({h})});
      model.params.push_back({"fc2.w", dense_init(h, 1, rng)});
      model.params.push_back({"fc2.b", Tensor({1})});
      break;
    case FrameModelKind::Lstm:
      model.params.push_back({"lstm.w", dense_init(1, 4 * h, rng)});
      model.params.push_back({"lstm.u", dense_init(h, 4 * h, rng)});
      model.params.push_back({"lstm.b", Tensor({4 * h})});
      model.params.push_back({"head.w", dense_init(h, 1, rng)});
      model.params.push_back({"head.b", Tensor({1})});
      break;
    case FrameModelKind::Cnn:
      model.params.push_back({"conv1.k", conv_init(k, k, t, f, rng)});
      model.params.push_back({"conv1.b", Tensor({f})});
      model.params.push_back({"conv2.k", conv_init(k, k, f, f, rng)});
      model.params.push_back({"conv2.b", Tensor({f})});
      model.params.push_back({"conv3.k", conv_init(k, k, f, 1, rng)});
      model.params.push_back({"conv3.b", Tensor({1})});
      break;
    case FrameModelKind::ConvLstm:
      model.params.push_back({"convlstm.w", conv_init(k, k, 1, 4 * f, rng)});
      model.params.push_back({"convlstm.u", conv_init(k, k, f, 4 * f, rng)});
      model.params.push_back({"convlstm.b", Tensor({4 * f})});
      model.params.push_back({"out.k", conv_init(k, k, f, 1, rng)});
      model.params.push_back({"out.b", Tensor({1})});
      break;
    case FrameModelKind::Crnn:
      break;
  }
  return model;
}

std::size_t count_parameters(const BaselineModel& model) {
  std::size_t n = 0;
  for (const auto& p : model.params) n += p.value.size();
  return n;
}

std::size_t count_parameters(const FrameModel& model) {
  std::size_t n = 0;
  for (const auto& p : model.params) n += p.value.size();
  return n;
}

std::size_t trainable_layer_count(const FrameModel& model) {
  std::size_t n = 0;
  for (const auto& p : model.params) {
    // one kernel-bearing tensor per layer; recurrent kernels and biases
    // belong to the layer introduced by .w/.k
    if (p.name.ends_with("conv.k") || p.name.ends_with("conv3d.k") ||
        p.name.ends_with("convlstm.w") || p.name.ends_with("lstm.w") ||
        p.name.ends_with("fc1.w") || p.name.ends_with("fc2.w") ||
        p.name.ends_with("head.w") || p.name.ends_with("conv1.k") ||
        p.name.ends_with("conv2.k") || p.name.ends_with("conv3.k") ||
        p.name.ends_with("out.k"))
      ++n;
  }
  return n;
}

namespace {

void check_frame_input(const FrameModel& model, const Tensor& x) {
  if (x.rank() != 5 || x.dim(4) != 1)
    throw DataError("frame_forward: expected [B,T,M,N,1], got " + x.shape_string());
  if (x.dim(1) != static_cast<std::size_t>(model.t_in()) ||
      x.dim(2) != static_cast<std::size_t>(model.rows()) ||
      x.dim(3) != static_cast<std::size_t>(model.cols()))
    throw DataError("frame_forward: window geometry " + x.shape_string() +
                    " does not match the model (T=" + std::to_string(model.t_in()) +
                    ", M=" + std::to_string(model.rows()) +
                    ", N=" + std::to_string(model.cols()) + ")");
}

Var crnn_forward_impl(Graph& g, const FrameModel& model, const std::vector<Var>& params,
                      const Tensor& x, BatchNormState& bn, bool training) {
  const auto& cfg = model.crnn;
  const std::size_t batch = x.dim(0);
  const auto time = static_cast<std::size_t>(cfg.t_in);
  const auto rows = static_cast<std::size_t>(cfg.rows);
  const auto cols = static_cast<std::size_t>(cfg.cols);
  const auto f = static_cast<std::size_t>(cfg.block_filters);
  const auto p = static_cast<std::size_t>(cfg.penultimate_filters);

  Var seq = g.constant(x);
  for (int block = 0; block < 4; ++block) {
    const std::size_t base = static_cast<std::size_t>(block) * 5;
    const std::size_t lstm_f = block == 3 ? p : f;
    // per-step encoder: rank-5 conv folds batch*time into the batch axis
    Var enc = tanh_act(g, conv2d(g, seq, params[base], params[base + 1]));
    ConvLstmVars w{params[base + 2], params[base + 3], params[base + 4]};
    Var h = g.constant(Tensor({batch, rows, cols, lstm_f}));
    Var c = g.constant(Tensor({batch, rows, cols, lstm_f}));
    std::vector<Var> outs;
    outs.reserve(time);
    for (std::size_t t = 0; t < time; ++t) {
      auto step = convlstm_step(g, time_slice(g, enc, t), h, c, w);
      h = step.first;
      c = step.second;
      outs.push_back(h);
    }
    seq = time_stack(g, outs);
  }

  Var normed = batch_norm(g, seq, params[20], params[21], bn, cfg.bn_eps, training);

  // static geography channel tiled over batch and time
  Tensor geo({batch, time, rows, cols, 1});
  if (!cfg.geography.empty()) {
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t t = 0; t < time; ++t)
        std::copy_n(cfg.geography.data(), rows * cols,
                    geo.data() + (b * time + t) * rows * cols);
  }
  Var merged = concat_channels(g, normed, g.constant(std::move(geo)));
  return sigmoid(g, conv3d(g, merged, params[22], params[23]));
}

Var comparator_forward_impl(Graph& g, const FrameModel& model, const std::vector<Var>& params,
                            const Tensor& x) {
  const auto& cfg = model.comp;
  const std::size_t batch = x.dim(0);
  const auto time = static_cast<std::size_t>(cfg.t_in);
  const auto rows = static_cast<std::size_t>(cfg.rows);
  const auto cols = static_cast<std::size_t>(cfg.cols);
  const auto hidden = static_cast<std::size_t>(cfg.hidden);
  Var input = g.constant(x);
  switch (cfg.kind) {
    case FrameModelKind::Nn: {
      Var cells = reshape(g, time_to_channels(g, input), {batch * rows * cols, time});
      Var a = tanh_act(g, dense(g, cells, params[0], params[1]));
      Var out = sigmoid(g, dense(g, a, params[2], params[3]));
      return reshape(g, out, {batch, rows, cols, 1});
    }
    case FrameModelKind::Lstm: {
      Var cells = reshape(g, time_to_channels(g, input), {batch * rows * cols, time});
      Var h = g.constant(Tensor({batch * rows * cols, hidden}));
      Var c = g.constant(Tensor({batch * rows * cols, hidden}));
      for (std::size_t t = 0; t < time; ++t) {
        auto step = dense_lstm_step(g, slice_channels(g, cells, t, 1), h, c, params[0],
                                    params[1], params[2], hidden);
        h = step.h;
        c = step.c;
      }
      Var out = sigmoid(g, dense(g, h, params[3], params[4]));
      return reshape(g, out, {batch, rows, cols, 1});
    }
    case FrameModelKind::Cnn: {
      Var stacked = time_to_channels(g, input);  // [B,M,N,T]
      Var a = tanh_act(g, conv2d(g, stacked, params[0], params[1]));
      Var b = tanh_act(g, conv2d(g, a, params[2], params[3]));
      return sigmoid(g, conv2d(g, b, params[4], params[5]));
    }
    case FrameModelKind::ConvLstm: {
      const auto f = static_cast<std::size_t>(cfg.filters);
      ConvLstmVars w{params[0], params[1], params[2]};
      Var h = g.constant(Tensor({batch, rows, cols, f}));
      Var c = g.constant(Tensor({batch, rows, cols, f}));
      for (std::size_t t = 0; t < time; ++t) {
        auto step = convlstm_step(g, time_slice(g, input, t), h, c, w);
        h = step.first;
        c = step.second;
      }
      return sigmoid(g, conv2d(g, h, params[3], params[4]));
    }
    case FrameModelKind::Crnn:
      break;
  }
  throw DataError("comparator_forward: unsupported kind");
}

}  // namespace

Var frame_forward(Graph& g, FrameModel& model, const std::vector<Var>& params, const Tensor& x,
                  bool training) {
  check_frame_input(model, x);
  if (model.kind == FrameModelKind::Crnn)
    return crnn_forward_impl(g, model, params, x, model.bn, training);
  return comparator_forward_impl(g, model, params, x);
}

Var frame_forward_infer(Graph& g, const FrameModel& model, const std::vector<Var>& params,
                        const Tensor& x) {
  check_frame_input(model, x);
  if (model.kind == FrameModelKind::Crnn) {
    BatchNormState bn = model.bn;  // read-only use
    return crnn_forward_impl(g, model, params, x, bn, false);
  }
  return comparator_forward_impl(g, model, params, x);
}

Tensor frame_training_target(const FrameModel& model, const Tensor& x, const Tensor& next) {
  check_frame_input(model, x);
  const std::size_t batch = x.dim(0);
  const std::size_t time = x.dim(1);
  const std::size_t plane = x.dim(2) * x.dim(3);
  if (next.size() != batch * plane)
    throw DataError("frame_training_target: next-frame batch shape mismatch");
  if (model.kind != FrameModelKind::Crnn)
    return next.reshaped({batch, x.dim(2), x.dim(3), 1});
  // every step is supervised against the following frame
  Tensor y({batch, time, x.dim(2), x.dim(3), 1});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t + 1 < time; ++t)
      std::copy_n(x.data() + (b * time + t + 1) * plane, plane,
                  y.data() + (b * time + t) * plane);
    std::copy_n(next.data() + b * plane, plane, y.data() + (b * time + time - 1) * plane);
  }
  return y;
}

Tensor frame_predict(const FrameModel& model, const std::vector<Tensor>& frames) {
  const auto rows = static_cast<std::size_t>(model.rows());
  const auto cols = static_cast<std::size_t>(model.cols());
  const auto time = static_cast<std::size_t>(model.t_in());
  if (frames.size() != time)
    throw DataError("frame_predict: expected " + std::to_string(time) + " frames, got " +
                    std::to_string(frames.size()));
  Tensor x({1, time, rows, cols, 1});
  for (std::size_t t = 0; t < time; ++t) {
    if (frames[t].size() != rows * cols)
      throw DataError("frame_predict: frame shape mismatch");
    std::copy_n(frames[t].data(), rows * cols, x.data() + t * rows * cols);
  }
  Graph g(false);
  auto params = make_param_vars(g, model.params, false);
  Var out = frame_forward_infer(g, model, params, x);
  Tensor frame({rows, cols});
  const std::size_t offset =
      model.kind == FrameModelKind::Crnn ? (time - 1) * rows * cols : 0;
  std::copy_n(out->value.data() + offset, rows * cols, frame.data());
  return frame;
}

Tensor forward_crnn(const FrameModel& model, const std::vector<Tensor>& frames) {
  for (const auto& f : frames)
    for (std::size_t i = 0; i < f.size(); ++i)
      if (f[i] > 1.0 + 1e-9)
        throw DataError("forward_crnn: input not normalized (value " + std::to_string(f[i]) +
                        " > 1)");
  return frame_predict(model, frames);
}

std::vector<Tensor> recursive_forecast(const FrameModel& model, std::vector<Tensor> window,
                                       int horizon) {
  if (horizon < 1) throw DataError("recursive_forecast: horizon must be >= 1");
  std::vector<Tensor> out;
  out.reserve(static_cast<std::size_t>(horizon));
  for (int h = 0; h < horizon; ++h) {
    Tensor pred = frame_predict(model, window);
    window.erase(window.begin());
    window.push_back(pred);
    out.push_back(std::move(pred));
  }
  return out;
}

std::vector<FrameWindow> make_frame_windows(const std::vector<Tensor>& frames, int t_in,
                                            int stride) {
  if (t_in < 1 || stride < 1) throw DataError("make_frame_windows: t_in and stride must be >= 1");
  std::vector<FrameWindow> windows;
  if (frames.size() < static_cast<std::size_t>(t_in) + 1) return windows;
  const std::size_t rows = frames.front().dim(0);
  const std::size_t cols = frames.front().dim(1);
  const std::size_t count =
      (frames.size() - static_cast<std::size_t>(t_in) - 1) / static_cast<std::size_t>(stride) +
      1;
  for (std::size_t w = 0; w < count; ++w) {
    const std::size_t offset = w * static_cast<std::size_t>(stride);
    FrameWindow fw;
    fw.input = Tensor({static_cast<std::size_t>(t_in), rows, cols});
    for (std::size_t t = 0; t < static_cast<std::size_t>(t_in); ++t) {
      if (!frames[offset + t].same_shape(frames.front()))
        throw DataError("make_frame_windows: inconsistent frame shapes");
      std::copy_n(frames[offset + t].data(), rows * cols,
                  fw.input.data() + t * rows * cols);
    }
    fw.next = frames[offset + static_cast<std::size_t>(t_in)];
    windows.push_back(std::move(fw));
  }
  return windows;
}

Tensor stack_window_inputs(const std::vector<const FrameWindow*>& batch) {
  if (batch.empty()) throw DataError("stack_window_inputs: empty batch");
  const auto& s = batch.front()->input.shape();
  Tensor x({batch.size(), s[0], s[1], s[2], 1});
  const std::size_t block = s[0] * s[1] * s[2];
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (!batch[b]->input.same_shape(batch.front()->input))
      throw DataError("stack_window_inputs: inconsistent window shapes");
    std::copy_n(batch[b]->input.data(), block, x.data() + b * block);
  }
  return x;
}

Tensor stack_window_targets(const std::vector<const FrameWindow*>& batch) {
  if (batch.empty()) throw DataError("stack_window_targets: empty batch");
  const auto& s = batch.front()->next.shape();
  Tensor y({batch.size(), s[0], s[1], 1});
  const std::size_t block = s[0] * s[1];
  for (std::size_t b = 0; b < batch.size(); ++b)
    std::copy_n(batch[b]->next.data(), block, y.data() + b * block);
  return y;
}

}  // namespace aircast
