#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "aircast/common.hpp"
#include "aircast/tensor.hpp"

namespace aircast {

struct Node;
using Var = std::shared_ptr<Node>;

// One tape node. `backprop` scatters this node's gradient into its parents;
// it is dropped (together with the value and grad buffers) as soon as it has
// run, so peak memory during backward stays close to the forward footprint.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool is_leaf = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;
};

// Recording context for a dynamic tape. With recording off the same ops
// compute plain values: nothing is retained and intermediates free as their
// handles go out of scope, which is what inference uses.
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}
  bool recording() const { return recording_; }

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value);
  Var make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop);

  /// Reverse-mode accumulation from a scalar loss into every reachable leaf.
  void backward(const Var& loss);

 private:
  bool recording_;
};

/// Adds `amount` into the node's grad buffer, allocating it on first use.
void accumulate_grad(Node& node, const Tensor& amount);

// --- elementwise & shape ops ------------------------------------------------

Var add(Graph& g, const Var& a, const Var& b);
Var sub(Graph& g, const Var& a, const Var& b);
Var mul(Graph& g, const Var& a, const Var& b);
Var scale(Graph& g, const Var& a, double factor);
Var add_bias(Graph& g, const Var& x, const Var& bias);  // bias broadcast over last axis
Var sigmoid(Graph& g, const Var& x);
Var tanh_act(Graph& g, const Var& x);
Var reshape(Graph& g, const Var& x, std::vector<std::size_t> shape);
Var concat_channels(Graph& g, const Var& a, const Var& b);
Var slice_channels(Graph& g, const Var& x, std::size_t from, std::size_t count);
std::pair<Var, Var> split_channels(Graph& g, const Var& x, std::size_t at);
Var time_slice(Graph& g, const Var& x, std::size_t t);      // [B,T,rest] -> [B,rest]
Var time_stack(Graph& g, const std::vector<Var>& steps);    // inverse of time_slice
Var time_to_channels(Graph& g, const Var& x);               // [B,T,M,N,C] -> [B,M,N,T*C]
Var sum_all(Graph& g, const Var& x);
Var mean_all(Graph& g, const Var& x);

// --- neural-net primitives ---------------------------------------------------

/// x [B,I] * w [I,O] + b [O]; pass a null b for no bias.
Var dense(Graph& g, const Var& x, const Var& w, const Var& b);

// Same-padding stride-1 cross-correlation. x [...,M,N,Ci] (leading axes fold
// into the batch), kernel [kh,kw,Ci,Co] with odd kh/kw, optional bias [Co].
Var conv2d(Graph& g, const Var& x, const Var& kernel, const Var& bias);

/// 3-D variant: x [B,T,M,N,Ci], kernel [kt,kh,kw,Ci,Co], same padding in t/h/w.
Var conv3d(Graph& g, const Var& x, const Var& kernel, const Var& bias);

/// Inverted dropout; identity when not training or rate == 0.
Var dropout(Graph& g, const Var& x, double rate, Rng& rng, bool training);

struct BatchNormState {
  Tensor running_mean;  // [C]
  Tensor running_var;   // [C]
  double momentum = 0.99;
};

// Per-channel (last axis) batch normalization. Training normalizes with batch
// statistics and momentum-updates `state`; inference uses the running stats.
Var batch_norm(Graph& g, const Var& x, const Var& gamma, const Var& beta,
               BatchNormState& state, double eps = 1e-3, bool training = true);

// Binary cross-entropy against a fixed target, averaged over all elements.
// Predictions are clamped to [1e-7, 1 - 1e-7] before the logs.
Var bce_loss(Graph& g, const Var& pred, const Tensor& target);

// --- ConvLSTM ---------------------------------------------------------------

/// Gate parameters; the 4F channel axis packs the gates in order i, f, g, o.
struct ConvLstmVars {
  Var w_in;   // [k,k,Ci,4F]
  Var w_rec;  // [k,k,F,4F]
  Var bias;   // [4F]
};

// Fused gate tensor sigma/tanh(conv(x,Wi) + conv(h,Wr) + b), shape [B,M,N,4F].
// One node for the whole gate block keeps the per-timestep tape small.
Var convlstm_gates(Graph& g, const Var& x, const Var& h, const ConvLstmVars& w);

// One ConvLSTM step:
//   i,f,o = sigmoid(...), g~ = tanh(...)
//   c' = f.c + i.g~ ;  h' = o.tanh(c')
std::pair<Var, Var> convlstm_step(Graph& g, const Var& x, const Var& h, const Var& c,
                                  const ConvLstmVars& w);

// --- verification -------------------------------------------------------------

// Max relative error between reverse-mode and central finite differences over
// every coordinate of every leaf. `f` must rebuild the same scalar function
// whenever it is called with the same point.
double gradient_check(const std::function<Var(Graph&, std::vector<Var>&)>& f,
                      const std::vector<Tensor>& point, double epsilon = 1e-5);

}  // namespace aircast
