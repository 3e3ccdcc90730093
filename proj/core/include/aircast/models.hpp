#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aircast/autodiff.hpp"
#include "aircast/common.hpp"
#include "aircast/tensor.hpp"

namespace aircast {

/// One named trainable tensor.
struct Param {
  std::string name;
  Tensor value;
};

std::vector<Var> make_param_vars(Graph& g, const std::vector<Param>& params,
                                 bool requires_grad = true);

// --- scalar baseline predictors ----------------------------------------------
// Stacks of recursive cells over a per-node window, dropout between layers,
// linear dense(1) head emitting the next-step value.

enum class CellKind { SimpleRnn, Gru, Lstm };

struct BaselineConfig {
  CellKind cell = CellKind::Lstm;
  int num_layers = 4;  // 1..5
  // Hidden width reconstructed from the published per-layer parameter
  // increment (1176 = 24*(2*24+1)); the tables pin it at 24.
  int hidden = 24;
  int channels = 1;  // 1..4, test node first
  int t_in = 24;
  double dropout = 0.2;
};

struct BaselineModel {
  BaselineConfig config;
  std::vector<Param> params;
  std::uint64_t seed = 0;
};

BaselineModel build_baseline(const BaselineConfig& config, std::uint64_t seed);

/// Batch forward over windows x [B, T, c]; linear output [B, 1].
Var baseline_forward(Graph& g, const BaselineModel& model, const std::vector<Var>& params,
                     const Tensor& x, Rng* dropout_rng = nullptr, bool training = false);

/// Inference on one window [T][c]; dropout off, deterministic.
double forward_baseline(const BaselineModel& model,
                        const std::vector<std::vector<double>>& window);

// Recursive rollout: each prediction is appended to channel 0 and the oldest
// step dropped; other channels hold their last observed value.
std::vector<double> recursive_forecast(const BaselineModel& model,
                                       std::vector<std::vector<double>> window, int horizon);

// --- frame models ---------------------------------------------------------------
// The CRNN plus the four comparison stand-ins. All consume T_in normalized
// heat-map frames and predict the next normalized frame.

enum class FrameModelKind { Nn, Lstm, Cnn, ConvLstm, Crnn };

std::string to_string(FrameModelKind kind);
std::optional<FrameModelKind> frame_model_kind_from(const std::string& name);

struct CrnnConfig {
  int rows = 40;
  int cols = 40;
  int t_in = 24;
  int block_filters = 16;        // constant filter count per block
  int penultimate_filters = 20;  // block-4 ConvLSTM feature maps
  int kernel = 3;
  double bn_eps = 1e-3;
  double bn_momentum = 0.99;
  Tensor geography;  // static [rows, cols] channel; empty means all zeros
};

/// Small reference configs for the nn / lstm / cnn / convlstm comparators.
struct ComparatorConfig {
  FrameModelKind kind = FrameModelKind::ConvLstm;
  int rows = 40;
  int cols = 40;
  int t_in = 24;
  int filters = 16;  // cnn / convlstm
  int hidden = 24;   // nn / lstm (applied per cell)
  int kernel = 3;
};

struct FrameModel {
  FrameModelKind kind = FrameModelKind::Crnn;
  CrnnConfig crnn;        // valid when kind == Crnn
  ComparatorConfig comp;  // valid otherwise
  std::vector<Param> params;
  BatchNormState bn;  // CRNN running statistics (not trainable)
  double theta_max = 1.0;
  std::uint64_t seed = 0;

  int rows() const { return kind == FrameModelKind::Crnn ? crnn.rows : comp.rows; }
  int cols() const { return kind == FrameModelKind::Crnn ? crnn.cols : comp.cols; }
  int t_in() const { return kind == FrameModelKind::Crnn ? crnn.t_in : comp.t_in; }
};

// Reference CRNN: 4 blocks of [per-step conv2d -> ConvLSTM2D], batch norm,
// geography concat, 3-D convolution + sigmoid. 9 trainable layers (batch norm
// is not counted as a layer).
FrameModel build_crnn(const CrnnConfig& config, std::uint64_t seed);
FrameModel build_comparator(const ComparatorConfig& config, std::uint64_t seed);

/// Trainable scalars; batch-norm running statistics excluded.
std::size_t count_parameters(const BaselineModel& model);
std::size_t count_parameters(const FrameModel& model);

/// Kernel-bearing layers (conv2d / ConvLSTM / dense / conv3d); BN not counted.
std::size_t trainable_layer_count(const FrameModel& model);

// Batch forward on x [B,T,M,N,1]. CRNN: per-step probability maps
// [B,T,M,N,1] (the last step is the next-frame prediction); comparators: the
// next frame [B,M,N,1]. Training mode updates the CRNN batch-norm state.
Var frame_forward(Graph& g, FrameModel& model, const std::vector<Var>& params, const Tensor& x,
                  bool training);
/// Inference-only variant; never touches model state.
Var frame_forward_infer(Graph& g, const FrameModel& model, const std::vector<Var>& params,
                        const Tensor& x);

/// Target matching frame_forward's output shape, built from the window and the
/// observed next frame (CRNN targets are the inputs shifted one step).
Tensor frame_training_target(const FrameModel& model, const Tensor& x, const Tensor& next);

/// frames: T_in normalized [M,N] maps. Returns the predicted next frame [M,N].
Tensor frame_predict(const FrameModel& model, const std::vector<Tensor>& frames);

// frame_predict with the input contract enforced: rejects inputs that are not
// normalized (any value > 1 + 1e-9) and windows of the wrong length.
Tensor forward_crnn(const FrameModel& model, const std::vector<Tensor>& frames);

/// Shift-and-predict rollout; returns H predicted frames.
std::vector<Tensor> recursive_forecast(const FrameModel& model, std::vector<Tensor> window,
                                       int horizon);

// --- supervised windows over frame sequences -----------------------------------

struct FrameWindow {
  Tensor input;  // [T,M,N] normalized
  Tensor next;   // [M,N] normalized
};

/// Sliding windows (stride >= 1) over a frame sequence already in [0,1].
std::vector<FrameWindow> make_frame_windows(const std::vector<Tensor>& frames, int t_in,
                                            int stride = 1);

Tensor stack_window_inputs(const std::vector<const FrameWindow*>& batch);  // [B,T,M,N,1]
Tensor stack_window_targets(const std::vector<const FrameWindow*>& batch);  // [B,M,N,1]

}  // namespace aircast
