#include "aircast/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace aircast {

void AdadeltaState::init(const std::vector<Param>& params) {
  acc_grad_sq.clear();
  acc_update_sq.clear();
  acc_grad_sq.reserve(params.size());
  acc_update_sq.reserve(params.size());
  for (const auto& p : params) {
    acc_grad_sq.emplace_back(p.value.shape());
    acc_update_sq.emplace_back(p.value.shape());
  }
}

void adadelta_step(std::vector<Param>& params, const std::vector<Tensor>& grads,
                   AdadeltaState& state) {
  if (params.size() != grads.size())
    throw DataError("adadelta_step: parameter/gradient count mismatch");
  if (state.acc_grad_sq.size() != params.size()) state.init(params);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor& x = params[p].value;
    const Tensor& grad = grads[p];
    if (grad.empty()) continue;  // no gradient flowed to this parameter
    if (!x.same_shape(grad))
      throw DataError("adadelta_step: gradient shape mismatch for " + params[p].name);
    Tensor& eg = state.acc_grad_sq[p];
    Tensor& ex = state.acc_update_sq[p];
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double gi = grad[i];
      if (!std::isfinite(gi))
        throw NumericError("adadelta_step: non-finite gradient for parameter '" +
                           params[p].name + "'");
      eg[i] = state.rho * eg[i] + (1.0 - state.rho) * gi * gi;
      const double delta = -std::sqrt(ex[i] + state.eps) / std::sqrt(eg[i] + state.eps) * gi;
      ex[i] = state.rho * ex[i] + (1.0 - state.rho) * delta * delta;
      x[i] += state.lr_scale * delta;
    }
  }
}

double lr_schedule(const std::vector<double>& val_losses, double initial_lr, double factor,
                   int patience, double min_improvement, double lr_floor) {
  PlateauScheduler sched(factor, patience, min_improvement, lr_floor);
  double lr = initial_lr;
  for (double loss : val_losses) lr = sched.update(loss, lr);
  return lr;
}

double bce_value(const Tensor& pred, const Tensor& target) {
  Graph g(false);
  Var p = g.leaf(pred, false);
  return bce_loss(g, p, target)->value[0];
}

namespace {

std::vector<Tensor> collect_grads(const std::vector<Var>& params) {
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const auto& v : params) grads.push_back(v->grad);
  return grads;
}

double mean_loss_over(const std::vector<std::size_t>& indices, std::size_t batch_size,
                      const std::vector<Param>& params, const BatchLossFn& batch_loss,
                      Rng& rng) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t begin = 0; begin < indices.size(); begin += batch_size) {
    const std::size_t end = std::min(indices.size(), begin + batch_size);
    std::vector<std::size_t> batch(indices.begin() + static_cast<std::ptrdiff_t>(begin),
                                   indices.begin() + static_cast<std::ptrdiff_t>(end));
    Graph g(false);
    auto pvars = make_param_vars(g, params, false);
    Rng r = rng.fork(begin);
    Var loss = batch_loss(g, pvars, batch, false, r);
    sum += loss->value[0] * static_cast<double>(batch.size());
    count += batch.size();
  }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

}  // namespace

TrainHistory train_loop(std::vector<Param>& params, std::size_t n_train, std::size_t n_val,
                        const BatchLossFn& batch_loss, const TrainConfig& config,
                        const std::function<void(int epoch)>& on_checkpoint) {
  config.validate();
  if (n_train == 0) throw DataError("train: empty training set");

  AdadeltaState state;
  state.init(params);
  state.lr_scale = config.lr;
  PlateauScheduler scheduler(config.decay_factor, config.patience, config.min_improvement,
                             config.lr_floor);
  Rng root(config.seed);
  TrainHistory history;
  history.reserve(static_cast<std::size_t>(config.epochs));

  std::vector<std::size_t> val_indices(n_val);
  std::iota(val_indices.begin(), val_indices.end(), n_train);

  const auto batch_size = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // seeded Fisher-Yates shuffle, one independent stream per epoch
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = root.fork(0x51abb1e0ULL + static_cast<std::uint64_t>(epoch));
    for (std::size_t i = n_train; i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.next_index(i)]);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    std::size_t batch_no = 0;
    for (std::size_t begin = 0; begin < n_train; begin += batch_size, ++batch_no) {
      const std::size_t end = std::min(n_train, begin + batch_size);
      std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                     order.begin() + static_cast<std::ptrdiff_t>(end));
      Graph g(true);
      auto pvars = make_param_vars(g, params, true);
      Rng rng = root.fork((static_cast<std::uint64_t>(epoch) << 24) | batch_no);
      Var loss = batch_loss(g, pvars, batch, true, rng);
      const double loss_value = loss->value[0];
      if (!std::isfinite(loss_value))
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_no));
      g.backward(loss);
      adadelta_step(params, collect_grads(pvars), state);
      loss_sum += loss_value * static_cast<double>(batch.size());
      seen += batch.size();
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(seen);
    if (n_val > 0) {
      Rng val_rng = root.fork(0xa11da7aULL + static_cast<std::uint64_t>(epoch));
      stats.val_loss = mean_loss_over(val_indices, batch_size, params, batch_loss, val_rng);
    } else {
      stats.val_loss = stats.train_loss;
    }
    state.lr_scale = scheduler.update(stats.val_loss, state.lr_scale);
    stats.lr_scale = state.lr_scale;
    history.push_back(stats);

    if (on_checkpoint && config.checkpoint_every > 0 &&
        (epoch + 1) % config.checkpoint_every == 0)
      on_checkpoint(epoch + 1);
  }
  return history;
}

TrainHistory train_frame_model(
    FrameModel& model, const std::vector<FrameWindow>& train_set,
    const std::vector<FrameWindow>& val_set, const TrainConfig& config,
    const std::function<void(int, const FrameModel&)>& on_checkpoint) {
  if (train_set.empty()) throw DataError("train: empty training set");
  std::vector<const FrameWindow*> all;
  all.reserve(train_set.size() + val_set.size());
  for (const auto& w : train_set) all.push_back(&w);
  for (const auto& w : val_set) all.push_back(&w);

  BatchLossFn batch_loss = [&model, &all](Graph& g, const std::vector<Var>& pvars,
                                          const std::vector<std::size_t>& indices,
                                          bool training, Rng&) {
    std::vector<const FrameWindow*> batch;
    batch.reserve(indices.size());
    for (std::size_t i : indices) batch.push_back(all[i]);
    Tensor x = stack_window_inputs(batch);
    Tensor y = frame_training_target(model, x, stack_window_targets(batch));
    Var pred = training ? frame_forward(g, model, pvars, x, true)
                        : frame_forward_infer(g, model, pvars, x);
    return bce_loss(g, pred, y);
  };

  std::function<void(int)> checkpoint;
  if (on_checkpoint)
    checkpoint = [&](int epoch) { on_checkpoint(epoch, model); };
  return train_loop(model.params, train_set.size(), val_set.size(), batch_loss, config,
                    checkpoint);
}

TrainHistory train_baseline_model(BaselineModel& model,
                                  const std::vector<WindowSample>& train_set,
                                  const std::vector<WindowSample>& val_set,
                                  const TrainConfig& config, double theta_max) {
  if (train_set.empty()) throw DataError("train: empty training set");
  if (!(theta_max > 0.0)) throw DataError("train: theta_max must be positive");
  std::vector<const WindowSample*> all;
  all.reserve(train_set.size() + val_set.size());
  for (const auto& w : train_set) all.push_back(&w);
  for (const auto& w : val_set) all.push_back(&w);
  const auto t_in = static_cast<std::size_t>(model.config.t_in);
  const auto channels = static_cast<std::size_t>(model.config.channels);

  BatchLossFn batch_loss = [&, t_in, channels, theta_max](
                               Graph& g, const std::vector<Var>& pvars,
                               const std::vector<std::size_t>& indices, bool training,
                               Rng& rng) {
    Tensor x({indices.size(), t_in, channels});
    Tensor y({indices.size(), std::size_t{1}});
    for (std::size_t b = 0; b < indices.size(); ++b) {
      const WindowSample& s = *all[indices[b]];
      if (s.inputs.size() != t_in || s.target.empty())
        throw DataError("train: window sample does not match the model window");
      for (std::size_t t = 0; t < t_in; ++t)
        for (std::size_t c = 0; c < channels; ++c)
          x[(b * t_in + t) * channels + c] = std::min(s.inputs[t][c] / theta_max, 1.0);
      y[b] = std::min(s.target[0] / theta_max, 1.0);
    }
    Var pred = baseline_forward(g, model, pvars, x, &rng, training);
    return bce_loss(g, pred, y);
  };

  return train_loop(model.params, train_set.size(), val_set.size(), batch_loss, config, {});
}

void write_history(std::ostream& out, const TrainHistory& history) {
  out << "epoch,train_loss,val_loss,lr_scale\n";
  char buf[128];
  for (std::size_t i = 0; i < history.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", i + 1, history[i].train_loss,
                  history[i].val_loss, history[i].lr_scale);
    out << buf;
  }
}

}  // namespace aircast
