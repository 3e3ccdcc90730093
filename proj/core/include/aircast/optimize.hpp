#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <vector>

#include "aircast/autodiff.hpp"
#include "aircast/common.hpp"
#include "aircast/ingest.hpp"
#include "aircast/models.hpp"

namespace aircast {

// Adadelta accumulators. The published learning rate acts as a multiplier on
// the Adadelta update (x += lr_scale * delta); the accumulators themselves
// track the unscaled delta.
struct AdadeltaState {
  double rho = 0.95;
  double eps = 1e-6;
  double lr_scale = 0.0002;
  std::vector<Tensor> acc_grad_sq;    // E[g^2], one per parameter
  std::vector<Tensor> acc_update_sq;  // E[dx^2]

  void init(const std::vector<Param>& params);
};

// E[g2] <- rho E[g2] + (1-rho) g2
// delta = -sqrt(E[dx2]+eps)/sqrt(E[g2]+eps) * g
// E[dx2] <- rho E[dx2] + (1-rho) delta2
// x <- x + lr_scale * delta
// Throws NumericError naming the parameter on a non-finite gradient.
void adadelta_step(std::vector<Param>& params, const std::vector<Tensor>& grads,
                   AdadeltaState& state);

/// Reduce-on-plateau policy: lr *= factor after `patience` consecutive epochs
/// without an improvement of at least min_improvement; floor at lr_floor.
class PlateauScheduler {
 public:
  PlateauScheduler(double factor = 0.8, int patience = 10, double min_improvement = 1e-6,
                   double lr_floor = 1e-8)
      : factor_(factor), patience_(patience), min_improvement_(min_improvement),
        lr_floor_(lr_floor) {
    if (!(factor > 0.0 && factor < 1.0))
      throw DataError("PlateauScheduler: factor must be in (0, 1)");
    if (patience < 1) throw DataError("PlateauScheduler: patience must be >= 1");
  }

  double update(double loss, double lr_scale) {
    if (loss < best_ - min_improvement_) {
      best_ = loss;
      stale_ = 0;
      return lr_scale;
    }
    if (++stale_ >= patience_) {
      stale_ = 0;
      return std::max(lr_scale * factor_, lr_floor_);
    }
    return lr_scale;
  }

 private:
  double factor_;
  int patience_;
  double min_improvement_;
  double lr_floor_;
  double best_ = std::numeric_limits<double>::infinity();
  int stale_ = 0;
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr_scale = 0.0;
};
using TrainHistory = std::vector<EpochStats>;

/// Replays a validation-loss history through the plateau policy and returns
/// the resulting lr_scale.
double lr_schedule(const std::vector<double>& val_losses, double initial_lr,
                   double factor = 0.8, int patience = 10, double min_improvement = 1e-6,
                   double lr_floor = 1e-8);

struct TrainConfig {
  int batch_size = 20;
  int epochs = 500;
  double lr = 0.0002;
  double decay_factor = 0.8;
  int patience = 10;
  double min_improvement = 1e-6;
  double lr_floor = 1e-8;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  // epochs between checkpoint callbacks, 0 = off

  void validate() const {
    if (batch_size < 1) throw DataError("TrainConfig: batch_size must be >= 1");
    if (epochs < 1) throw DataError("TrainConfig: epochs must be >= 1");
    if (!(decay_factor > 0.0 && decay_factor < 1.0))
      throw DataError("TrainConfig: decay factor must be in (0, 1)");
    if (!(lr > 0.0)) throw DataError("TrainConfig: lr must be positive");
  }
};

/// BCE of a plain prediction tensor against a target (no graph).
double bce_value(const Tensor& pred, const Tensor& target);

// Generic epoch loop: seeded shuffling into batches of batch_size (the last
// one may be short), forward/backward per batch, one Adadelta step per batch,
// scheduler on the per-epoch validation loss (training loss when there is no
// validation set). Deterministic for a fixed seed.
//
// batch_loss builds the scalar loss for the given sample indices; train
// samples are [0, n_train), validation samples [n_train, n_train + n_val).
using BatchLossFn = std::function<Var(Graph&, const std::vector<Var>& params,
                                      const std::vector<std::size_t>& indices, bool training,
                                      Rng& rng)>;

TrainHistory train_loop(std::vector<Param>& params, std::size_t n_train, std::size_t n_val,
                        const BatchLossFn& batch_loss, const TrainConfig& config,
                        const std::function<void(int epoch)>& on_checkpoint = {});

/// Eq.-style training of a frame model on supervised windows.
TrainHistory train_frame_model(
    FrameModel& model, const std::vector<FrameWindow>& train_set,
    const std::vector<FrameWindow>& val_set, const TrainConfig& config,
    const std::function<void(int epoch, const FrameModel&)>& on_checkpoint = {});

// Baseline training on scalar windows; inputs and targets are divided by
// theta_max so the Eq.-style loss sees values in [0, 1].
TrainHistory train_baseline_model(BaselineModel& model,
                                  const std::vector<WindowSample>& train_set,
                                  const std::vector<WindowSample>& val_set,
                                  const TrainConfig& config, double theta_max);

/// History file format: one `epoch,train_loss,val_loss,lr_scale` row per epoch.
void write_history(std::ostream& out, const TrainHistory& history);

}  // namespace aircast
