#include "aircast/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "conv_kernels.hpp"

namespace aircast {

namespace {

bool any_requires_grad(const std::vector<Var>& vars) {
  for (const auto& v : vars)
    if (v && v->requires_grad) return true;
  return false;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->value.same_shape(b->value))
    throw DataError(std::string(op) + ": shape mismatch " + a->value.shape_string() + " vs " +
                    b->value.shape_string());
}

detail::Conv2dDims conv2d_dims(const Tensor& x, const Tensor& k) {
  if (x.rank() < 3) throw DataError("conv2d: input rank must be >= 3 ([...,M,N,C])");
  if (k.rank() != 4) throw DataError("conv2d: kernel rank must be 4 ([kh,kw,Ci,Co])");
  detail::Conv2dDims d;
  d.rows = x.dim(x.rank() - 3);
  d.cols = x.dim(x.rank() - 2);
  d.cin = x.dim(x.rank() - 1);
  d.batch = x.size() / (d.rows * d.cols * d.cin);
  d.kh = k.dim(0);
  d.kw = k.dim(1);
  d.cout = k.dim(3);
  if (k.dim(2) != d.cin)
    throw DataError("conv2d: channel mismatch (input " + std::to_string(d.cin) + ", kernel " +
                    std::to_string(k.dim(2)) + ")");
  if (d.kh % 2 == 0 || d.kw % 2 == 0)
    throw DataError("conv2d: same padding requires odd kernel extents");
  return d;
}

detail::Conv3dDims conv3d_dims(const Tensor& x, const Tensor& k) {
  if (x.rank() != 5) throw DataError("conv3d: input rank must be 5 ([B,T,M,N,C])");
  if (k.rank() != 5) throw DataError("conv3d: kernel rank must be 5 ([kt,kh,kw,Ci,Co])");
  detail::Conv3dDims d;
  d.batch = x.dim(0);
  d.time = x.dim(1);
  d.rows = x.dim(2);
  d.cols = x.dim(3);
  d.cin = x.dim(4);
  d.kt = k.dim(0);
  d.kh = k.dim(1);
  d.kw = k.dim(2);
  d.cout = k.dim(4);
  if (k.dim(3) != d.cin)
    throw DataError("conv3d: channel mismatch (input " + std::to_string(d.cin) + ", kernel " +
                    std::to_string(k.dim(3)) + ")");
  if (d.kt % 2 == 0 || d.kh % 2 == 0 || d.kw % 2 == 0)
    throw DataError("conv3d: same padding requires odd kernel extents");
  return d;
}

std::vector<std::size_t> with_last_dim(const std::vector<std::size_t>& shape, std::size_t c) {
  auto out = shape;
  out.back() = c;
  return out;
}

}  // namespace

void accumulate_grad(Node& node, const Tensor& amount) {
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  node.grad.add_scaled(amount, 1.0);
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad && recording_;
  n->is_leaf = true;
  return n;
}

Var Graph::constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->is_leaf = true;
  return n;
}

Var Graph::make(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (recording_ && any_requires_grad(parents)) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
  }
  return n;
}

void Graph::backward(const Var& loss) {
  if (!loss) throw DataError("backward: null loss");
  if (loss->value.size() != 1) throw DataError("backward: loss must be scalar");
  if (!std::isfinite(loss->value[0])) throw NumericError("backward: non-finite loss");

  // Topological order via iterative postorder DFS: parents land before
  // children, so the reversed walk sees every child before its parents. The
  // order holds owning handles; eager buffer release below must not destroy
  // a node that is still scheduled.
  std::vector<Var> topo;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Var, std::size_t>> vstack;
  vstack.emplace_back(loss, 0);
  visited.insert(loss.get());
  while (!vstack.empty()) {
    auto& [node, next] = vstack.back();
    if (next < node->parents.size()) {
      const Var& parent = node->parents[next];
      ++next;
      if (parent->requires_grad && visited.insert(parent.get()).second)
        vstack.emplace_back(parent, 0);
    } else {
      topo.push_back(node);
      vstack.pop_back();
    }
  }

  loss->grad = Tensor({}, std::vector<double>{1.0});
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    Node* node = it->get();
    if (node->backprop && !node->grad.empty()) node->backprop(*node);
    if (!node->is_leaf) {
      // free as we go: nothing downstream reads this node again
      node->grad = Tensor();
      if (node != loss.get()) node->value = Tensor();
      node->backprop = nullptr;
      node->parents.clear();
    }
  }
}

// --- elementwise --------------------------------------------------------------

Var add(Graph& g, const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out = a->value;
  out.add_scaled(b->value, 1.0);
  return g.make(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) accumulate_grad(*self.parents[0], self.grad);
    if (self.parents[1]->requires_grad) accumulate_grad(*self.parents[1], self.grad);
  });
}

Var sub(Graph& g, const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out = a->value;
  out.add_scaled(b->value, -1.0);
  return g.make(std::move(out), {a, b}, [](Node& self) {
    if (self.parents[0]->requires_grad) accumulate_grad(*self.parents[0], self.grad);
    if (self.parents[1]->requires_grad) {
      Node& p = *self.parents[1];
      if (p.grad.empty()) p.grad = Tensor(p.value.shape());
      p.grad.add_scaled(self.grad, -1.0);
    }
  });
}

Var mul(Graph& g, const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * b->value[i];
  return g.make(std::move(out), {a, b}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      if (pa.grad.empty()) pa.grad = Tensor(pa.value.shape());
      for (std::size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      if (pb.grad.empty()) pb.grad = Tensor(pb.value.shape());
      for (std::size_t i = 0; i < pb.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
}

Var scale(Graph& g, const Var& a, double factor) {
  Tensor out(a->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a->value[i] * factor;
  return g.make(std::move(out), {a}, [factor](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad = Tensor(p.value.shape());
    p.grad.add_scaled(self.grad, factor);
  });
}

Var add_bias(Graph& g, const Var& x, const Var& bias) {
  const std::size_t c = x->value.shape().back();
  if (bias->value.rank() != 1 || bias->value.dim(0) != c)
    throw DataError("add_bias: bias must be rank 1 matching the channel axis");
  Tensor out = x->value;
  double* o = out.data();
  const double* b = bias->value.data();
  for (std::size_t i = 0; i < out.size(); i += c)
    for (std::size_t j = 0; j < c; ++j) o[i + j] += b[j];
  return g.make(std::move(out), {x, bias}, [c](Node& self) {
    Node& px = *self.parents[0];
    Node& pb = *self.parents[1];
    if (px.requires_grad) accumulate_grad(px, self.grad);
    if (pb.requires_grad) {
      if (pb.grad.empty()) pb.grad = Tensor(pb.value.shape());
      const double* gsrc = self.grad.data();
      for (std::size_t i = 0; i < self.grad.size(); i += c)
        for (std::size_t j = 0; j < c; ++j) pb.grad[j] += gsrc[i + j];
    }
  });
}

Var sigmoid(Graph& g, const Var& x) {
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x->value[i]));
  // sigma'(z) = s(1-s) reads the node's own output, alive until this runs
  return g.make(std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad = Tensor(p.value.shape());
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      const double s = self.value[i];
      p.grad[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Var tanh_act(Graph& g, const Var& x) {
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x->value[i]);
  return g.make(std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad = Tensor(p.value.shape());
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      const double t = self.value[i];
      p.grad[i] += self.grad[i] * (1.0 - t * t);
    }
  });
}

Var reshape(Graph& g, const Var& x, std::vector<std::size_t> shape) {
  Tensor out = x->value.reshaped(shape);
  return g.make(std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad = Tensor(p.value.shape());
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Var concat_channels(Graph& g, const Var& a, const Var& b) {
  const auto& sa = a->value.shape();
  const auto& sb = b->value.shape();
  if (sa.size() != sb.size() || sa.empty())
    throw DataError("concat_channels: rank mismatch");
  for (std::size_t i = 0; i + 1 < sa.size(); ++i)
    if (sa[i] != sb[i]) throw DataError("concat_channels: leading shape mismatch");
  const std::size_t ca = sa.back(), cb = sb.back();
  Tensor out(with_last_dim(sa, ca + cb));
  const std::size_t groups = out.size() / (ca + cb);
  for (std::size_t i = 0; i < groups; ++i) {
    std::copy_n(a->value.data() + i * ca, ca, out.data() + i * (ca + cb));
    std::copy_n(b->value.data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
  }
  return g.make(std::move(out), {a, b}, [ca, cb, groups](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const double* gs = self.grad.data();
    if (pa.requires_grad) {
      if (pa.grad.empty()) pa.grad = Tensor(pa.value.shape());
      for (std::size_t i = 0; i < groups; ++i)
        for (std::size_t j = 0; j < ca; ++j) pa.grad[i * ca + j] += gs[i * (ca + cb) + j];
    }
    if (pb.requires_grad) {
      if (pb.grad.empty()) pb.grad = Tensor(pb.value.shape());
      for (std::size_t i = 0; i < groups; ++i)
        for (std::size_t j = 0; j < cb; ++j) pb.grad[i * cb + j] += gs[i * (ca + cb) + ca + j];
    }
  });
}

Var slice_channels(Graph& g, const Var& x, std::size_t from, std::size_t count) {
  const auto& s = x->value.shape();
  const std::size_t c = s.back();
  if (from + count > c) throw DataError("slice_channels: slice out of range");
  Tensor out(with_last_dim(s, count));
  const std::size_t groups = x->value.size() / c;
  for (std::size_t i = 0; i < groups; ++i)
    std::copy_n(x->value.data() + i * c + from, count, out.data() + i * count);
  return g.make(std::move(out), {x}, [from, count, c, groups](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad = Tensor(p.value.shape());
    for (std::size_t i = 0; i < groups; ++i)
      for (std::size_t j = 0; j < count; ++j)
        p.grad[i * c + from + j] += self.grad[i * count + j];
  });
}

std::pair<Var, Var> split_channels(Graph& g, const Var& x, std::size_t at) {
  const std::size_t c = x->value.shape().back();
  if (at == 0 || at >= c) throw DataError("split_channels: split point out of range");
  return {slice_channels(g, x, 0, at), slice_channels(g, x, at, c - at)};
}

Var time_slice(Graph& g, const Var& x, std::size_t t) {
  const auto& s = x->value.shape();
  if (s.size() < 2) throw DataError("time_slice: rank must be >= 2");
  const std::size_t batch = s[0];
  const std::size_t time = s[1];
  if (t >= time) throw DataError("time_slice: index out of range");
  std::size_t rest = 1;
  for (std::size_t i = 2; i < s.size(); ++i) rest *= s[i];
  std::vector<std::size_t> out_shape;
  out_shape.push_back(batch);
  for (std::size_t i = 2; i < s.size(); ++i) out_shape.push_back(s[i]);
  Tensor out(out_shape);
  for (std::size_t b = 0; b < batch; ++b)
    std::copy_n(x->value.data() + (b * time + t) * rest, rest, out.data() + b * rest);
  return g.make(std::move(out), {x}, [t, batch, time, rest](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad = Tensor(p.value.shape());
    for (std::size_t b = 0; b < batch; ++b) {
      double* dst = p.grad.data() + (b * time + t) * rest;
      const double* src = self.grad.data() + b * rest;
      for (std::size_t i = 0; i < rest; ++i) dst[i] += src[i];
    }
  });
}

Var time_stack(Graph& g, const std::vector<Var>& steps) {
  if (steps.empty()) throw DataError("time_stack: no steps");
  const auto& s0 = steps.front()->value.shape();
  for (const auto& v : steps)
    if (v->value.shape() != s0) throw DataError("time_stack: step shape mismatch");
  const std::size_t batch = s0[0];
  std::size_t rest = 1;
  for (std::size_t i = 1; i < s0.size(); ++i) rest *= s0[i];
  const std::size_t time = steps.size();
  std::vector<std::size_t> out_shape;
  out_shape.push_back(batch);
  out_shape.push_back(time);
  for (std::size_t i = 1; i < s0.size(); ++i) out_shape.push_back(s0[i]);
  Tensor out(out_shape);
  for (std::size_t t = 0; t < time; ++t)
    for (std::size_t b = 0; b < batch; ++b)
      std::copy_n(steps[t]->value.data() + b * rest, rest,
                  out.data() + (b * time + t) * rest);
  return g.make(std::move(out), std::vector<Var>(steps.begin(), steps.end()),
                [batch, time, rest](Node& self) {
                  for (std::size_t t = 0; t < time; ++t) {
                    Node& p = *self.parents[t];
                    if (!p.requires_grad) continue;
                    if (p.grad.empty()) p.grad = Tensor(p.value.shape());
                    for (std::size_t b = 0; b < batch; ++b) {
                      const double* src = self.grad.data() + (b * time + t) * rest;
                      double* dst = p.grad.data() + b * rest;
                      for (std::size_t i = 0; i < rest; ++i) dst[i] += src[i];
                    }
                  }
                });
}

Var time_to_channels(Graph& g, const Var& x) {
  const auto& s = x->value.shape();
  if (s.size() != 5) throw DataError("time_to_channels: rank must be 5");
  const std::size_t B = s[0], T = s[1], M = s[2], N = s[3], C = s[4];
  Tensor out({B, M, N, T * C});
  // (b,t,m,n,c) -> (b,m,n,t,c)
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t p = 0; p < M * N; ++p)
        std::copy_n(x->value.data() + ((b * T + t) * M * N + p) * C, C,
                    out.data() + (b * M * N + p) * T * C + t * C);
  return g.make(std::move(out), {x}, [B, T, M, N, C](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad = Tensor(p.value.shape());
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t q = 0; q < M * N; ++q) {
          const double* src = self.grad.data() + (b * M * N + q) * T * C + t * C;
          double* dst = p.grad.data() + ((b * T + t) * M * N + q) * C;
          for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
        }
  });
}

Var sum_all(Graph& g, const Var& x) {
  Tensor out({}, std::vector<double>{x->value.sum()});
  return g.make(std::move(out), {x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad = Tensor(p.value.shape());
    const double go = self.grad[0];
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += go;
  });
}

Var mean_all(Graph& g, const Var& x) {
  if (x->value.size() == 0) throw DataError("mean_all: empty tensor");
  const double inv = 1.0 / static_cast<double>(x->value.size());
  Tensor out({}, std::vector<double>{x->value.sum() * inv});
  return g.make(std::move(out), {x}, [inv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad = Tensor(p.value.shape());
    const double go = self.grad[0] * inv;
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += go;
  });
}

// --- dense / conv -------------------------------------------------------------

Var dense(Graph& g, const Var& x, const Var& w, const Var& b) {
  if (x->value.rank() != 2 || w->value.rank() != 2)
    throw DataError("dense: x must be [B,I] and w [I,O]");
  const std::size_t batch = x->value.dim(0);
  const std::size_t in = x->value.dim(1);
  const std::size_t out_dim = w->value.dim(1);
  if (w->value.dim(0) != in) throw DataError("dense: weight rows must match input width");
  if (b && (b->value.rank() != 1 || b->value.dim(0) != out_dim))
    throw DataError("dense: bias shape mismatch");
  Tensor out({batch, out_dim});
  detail::dense_forward(x->value.data(), w->value.data(), b ? b->value.data() : nullptr,
                        out.data(), batch, in, out_dim);
  std::vector<Var> parents{x, w};
  if (b) parents.push_back(b);
  return g.make(std::move(out), std::move(parents), [batch, in, out_dim](Node& self) {
    Node& px = *self.parents[0];
    Node& pw = *self.parents[1];
    Node* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    if (px.requires_grad) {
      if (px.grad.empty()) px.grad = Tensor(px.value.shape());
      detail::dense_grad_input(self.grad.data(), pw.value.data(), px.grad.data(), batch, in,
                               out_dim);
    }
    const bool need_w = pw.requires_grad;
    const bool need_b = pb && pb->requires_grad;
    if (need_w || need_b) {
      if (need_w && pw.grad.empty()) pw.grad = Tensor(pw.value.shape());
      if (need_b && pb->grad.empty()) pb->grad = Tensor(pb->value.shape());
      Tensor scratch_w;  // still accumulate dw when only bias is trainable
      if (!need_w) scratch_w = Tensor(pw.value.shape());
      detail::dense_grad_weight(px.value.data(), self.grad.data(),
                                need_w ? pw.grad.data() : scratch_w.data(),
                                need_b ? pb->grad.data() : nullptr, batch, in, out_dim);
    }
  });
}

Var conv2d(Graph& g, const Var& x, const Var& kernel, const Var& bias) {
  auto d = conv2d_dims(x->value, kernel->value);
  if (bias && (bias->value.rank() != 1 || bias->value.dim(0) != d.cout))
    throw DataError("conv2d: bias shape mismatch");
  Tensor out(with_last_dim(x->value.shape(), d.cout));
  detail::conv2d_forward(x->value.data(), kernel->value.data(),
                         bias ? bias->value.data() : nullptr, out.data(), d);
  std::vector<Var> parents{x, kernel};
  if (bias) parents.push_back(bias);
  return g.make(std::move(out), std::move(parents), [d](Node& self) {
    Node& px = *self.parents[0];
    Node& pk = *self.parents[1];
    Node* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    if (px.requires_grad) {
      if (px.grad.empty()) px.grad = Tensor(px.value.shape());
      detail::conv2d_grad_input(self.grad.data(), pk.value.data(), px.grad.data(), d);
    }
    const bool need_k = pk.requires_grad;
    const bool need_b = pb && pb->requires_grad;
    if (need_k || need_b) {
      if (need_k && pk.grad.empty()) pk.grad = Tensor(pk.value.shape());
      if (need_b && pb->grad.empty()) pb->grad = Tensor(pb->value.shape());
      Tensor scratch_k;
      if (!need_k) scratch_k = Tensor(pk.value.shape());
      detail::conv2d_grad_kernel(px.value.data(), self.grad.data(),
                                 need_k ? pk.grad.data() : scratch_k.data(),
                                 need_b ? pb->grad.data() : nullptr, d);
    }
  });
}

Var conv3d(Graph& g, const Var& x, const Var& kernel, const Var& bias) {
  auto d = conv3d_dims(x->value, kernel->value);
  if (bias && (bias->value.rank() != 1 || bias->value.dim(0) != d.cout))
    throw DataError("conv3d: bias shape mismatch");
  Tensor out(with_last_dim(x->value.shape(), d.cout));
  detail::conv3d_forward(x->value.data(), kernel->value.data(),
                         bias ? bias->value.data() : nullptr, out.data(), d);
  std::vector<Var> parents{x, kernel};
  if (bias) parents.push_back(bias);
  return g.make(std::move(out), std::move(parents), [d](Node& self) {
    Node& px = *self.parents[0];
    Node& pk = *self.parents[1];
    Node* pb = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    if (px.requires_grad) {
      if (px.grad.empty()) px.grad = Tensor(px.value.shape());
      detail::conv3d_grad_input(self.grad.data(), pk.value.data(), px.grad.data(), d);
    }
    const bool need_k = pk.requires_grad;
    const bool need_b = pb && pb->requires_grad;
    if (need_k || need_b) {
      if (need_k && pk.grad.empty()) pk.grad = Tensor(pk.value.shape());
      if (need_b && pb->grad.empty()) pb->grad = Tensor(pb->value.shape());
      Tensor scratch_k;
      if (!need_k) scratch_k = Tensor(pk.value.shape());
      detail::conv3d_grad_kernel(px.value.data(), self.grad.data(),
                                 need_k ? pk.grad.data() : scratch_k.data(),
                                 need_b ? pb->grad.data() : nullptr, d);
    }
  });
}

Var dropout(Graph& g, const Var& x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw DataError("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;  // identity at inference
  Tensor mask(x->value.shape());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.next_unit() >= rate ? keep_scale : 0.0;
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x->value[i] * mask[i];
  return g.make(std::move(out), {x}, [mask = std::move(mask)](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad = Tensor(p.value.shape());
    for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += self.grad[i] * mask[i];
  });
}

Var batch_norm(Graph& g, const Var& x, const Var& gamma, const Var& beta,
               BatchNormState& state, double eps, bool training) {
  if (x->value.rank() < 2) throw DataError("batch_norm: rank must be >= 2");
  const std::size_t c = x->value.shape().back();
  const std::size_t count = x->value.size() / c;
  if (count == 0 || x->value.size() == 0) throw DataError("batch_norm: zero-size batch");
  if (gamma->value.size() != c || beta->value.size() != c)
    throw DataError("batch_norm: gamma/beta must have one entry per channel");
  if (state.running_mean.size() != c) {
    state.running_mean = Tensor({c});
    state.running_var = Tensor({c}, 1.0);
  }

  Tensor mean({c}), var({c});
  if (training) {
    for (std::size_t i = 0; i < x->value.size(); ++i) mean[i % c] += x->value[i];
    for (std::size_t j = 0; j < c; ++j) mean[j] /= static_cast<double>(count);
    for (std::size_t i = 0; i < x->value.size(); ++i) {
      const double dv = x->value[i] - mean[i % c];
      var[i % c] += dv * dv;
    }
    for (std::size_t j = 0; j < c; ++j) var[j] /= static_cast<double>(count);
    for (std::size_t j = 0; j < c; ++j) {
      state.running_mean[j] = state.momentum * state.running_mean[j] + (1.0 - state.momentum) * mean[j];
      state.running_var[j] = state.momentum * state.running_var[j] + (1.0 - state.momentum) * var[j];
    }
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }

  Tensor invstd({c});
  for (std::size_t j = 0; j < c; ++j) invstd[j] = 1.0 / std::sqrt(var[j] + eps);
  Tensor xhat(x->value.shape());
  for (std::size_t i = 0; i < x->value.size(); ++i)
    xhat[i] = (x->value[i] - mean[i % c]) * invstd[i % c];
  Tensor out(x->value.shape());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = gamma->value[i % c] * xhat[i] + beta->value[i % c];

  return g.make(std::move(out), {x, gamma, beta},
                [xhat = std::move(xhat), invstd = std::move(invstd), c, count,
                 training](Node& self) {
                  Node& px = *self.parents[0];
                  Node& pg = *self.parents[1];
                  Node& pb = *self.parents[2];
                  const std::size_t n = self.grad.size();
                  // channel reductions shared by all three gradients
                  Tensor sum_dy({c}), sum_dy_xhat({c});
                  for (std::size_t i = 0; i < n; ++i) {
                    sum_dy[i % c] += self.grad[i];
                    sum_dy_xhat[i % c] += self.grad[i] * xhat[i];
                  }
                  if (pg.requires_grad) {
                    if (pg.grad.empty()) pg.grad = Tensor(pg.value.shape());
                    pg.grad.add_scaled(sum_dy_xhat, 1.0);
                  }
                  if (pb.requires_grad) {
                    if (pb.grad.empty()) pb.grad = Tensor(pb.value.shape());
                    pb.grad.add_scaled(sum_dy, 1.0);
                  }
                  if (px.requires_grad) {
                    if (px.grad.empty()) px.grad = Tensor(px.value.shape());
                    const double invn = 1.0 / static_cast<double>(count);
                    for (std::size_t i = 0; i < n; ++i) {
                      const std::size_t j = i % c;
                      const double gmul = pg.value[j] * invstd[j];
                      double dx = self.grad[i];
                      if (training)
                        dx -= invn * (sum_dy[j] + xhat[i] * sum_dy_xhat[j]);
                      px.grad[i] += gmul * dx;
                    }
                  }
                });
}

Var bce_loss(Graph& g, const Var& pred, const Tensor& target) {
  if (!pred->value.same_shape(target))
    throw DataError("bce_loss: prediction/target shape mismatch " + pred->value.shape_string() +
                    " vs " + target.shape_string());
  if (pred->value.size() == 0) throw DataError("bce_loss: empty tensors");
  constexpr double lo = 1e-7;
  constexpr double hi = 1.0 - 1e-7;
  const std::size_t n = pred->value.size();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pred->value[i], lo, hi);
    const double y = target[i];
    sum += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  Tensor out({}, std::vector<double>{-sum / static_cast<double>(n)});
  Tensor y = target;
  return g.make(std::move(out), {pred}, [y = std::move(y), n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    if (p.grad.empty()) p.grad = Tensor(p.value.shape());
    const double go = self.grad[0] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double pv = p.value[i];
      if (pv <= 1e-7 || pv >= 1.0 - 1e-7) continue;  // clamp region: zero slope
      p.grad[i] += go * (-(y[i] / pv) + (1.0 - y[i]) / (1.0 - pv));
    }
  });
}

// --- ConvLSTM -----------------------------------------------------------------

Var convlstm_gates(Graph& g, const Var& x, const Var& h, const ConvLstmVars& w) {
  auto dx = conv2d_dims(x->value, w.w_in->value);
  auto dh = conv2d_dims(h->value, w.w_rec->value);
  if (dx.cout != dh.cout || dx.batch != dh.batch || dx.rows != dh.rows || dx.cols != dh.cols)
    throw DataError("convlstm_gates: input/hidden geometry mismatch");
  const std::size_t gates4 = dx.cout;
  if (gates4 % 4 != 0) throw DataError("convlstm_gates: kernel must pack 4F output channels");
  const std::size_t f = gates4 / 4;
  if (dh.cin != f) throw DataError("convlstm_gates: recurrent kernel channels must equal F");
  if (w.bias->value.size() != gates4) throw DataError("convlstm_gates: bias must be [4F]");

  Tensor out(with_last_dim(x->value.shape(), gates4));
  detail::conv2d_forward(x->value.data(), w.w_in->value.data(), w.bias->value.data(),
                         out.data(), dx);
  detail::conv2d_forward(h->value.data(), w.w_rec->value.data(), nullptr, out.data(), dh,
                         /*accumulate=*/true);

  // activations in place: sigmoid everywhere except tanh on the candidate
  // block [2F, 3F)
  const std::size_t groups = out.size() / gates4;
  for (std::size_t i = 0; i < groups; ++i) {
    double* v = out.data() + i * gates4;
    for (std::size_t j = 0; j < gates4; ++j) {
      const bool is_candidate = j >= 2 * f && j < 3 * f;
      v[j] = is_candidate ? std::tanh(v[j]) : 1.0 / (1.0 + std::exp(-v[j]));
    }
  }

  return g.make(std::move(out), {x, h, w.w_in, w.w_rec, w.bias},
                [dx, dh, f, gates4](Node& self) {
                  Node& px = *self.parents[0];
                  Node& ph = *self.parents[1];
                  Node& pwi = *self.parents[2];
                  Node& pwr = *self.parents[3];
                  Node& pb = *self.parents[4];

                  // d(pre-activation) from this node's own gate values
                  Tensor dpre(self.grad.shape());
                  const std::size_t groups = dpre.size() / gates4;
                  for (std::size_t i = 0; i < groups; ++i) {
                    const double* a = self.value.data() + i * gates4;
                    const double* gr = self.grad.data() + i * gates4;
                    double* dp = dpre.data() + i * gates4;
                    for (std::size_t j = 0; j < gates4; ++j) {
                      const bool is_candidate = j >= 2 * f && j < 3 * f;
                      dp[j] = is_candidate ? gr[j] * (1.0 - a[j] * a[j])
                                           : gr[j] * a[j] * (1.0 - a[j]);
                    }
                  }

                  if (px.requires_grad) {
                    if (px.grad.empty()) px.grad = Tensor(px.value.shape());
                    detail::conv2d_grad_input(dpre.data(), pwi.value.data(), px.grad.data(), dx);
                  }
                  if (ph.requires_grad) {
                    if (ph.grad.empty()) ph.grad = Tensor(ph.value.shape());
                    detail::conv2d_grad_input(dpre.data(), pwr.value.data(), ph.grad.data(), dh);
                  }
                  if (pwi.requires_grad || pb.requires_grad) {
                    if (pwi.requires_grad && pwi.grad.empty()) pwi.grad = Tensor(pwi.value.shape());
                    if (pb.requires_grad && pb.grad.empty()) pb.grad = Tensor(pb.value.shape());
                    Tensor scratch;
                    if (!pwi.requires_grad) scratch = Tensor(pwi.value.shape());
                    detail::conv2d_grad_kernel(px.value.data(), dpre.data(),
                                               pwi.requires_grad ? pwi.grad.data() : scratch.data(),
                                               pb.requires_grad ? pb.grad.data() : nullptr, dx);
                  }
                  if (pwr.requires_grad) {
                    if (pwr.grad.empty()) pwr.grad = Tensor(pwr.value.shape());
                    detail::conv2d_grad_kernel(ph.value.data(), dpre.data(), pwr.grad.data(),
                                               nullptr, dh);
                  }
                });
}

std::pair<Var, Var> convlstm_step(Graph& g, const Var& x, const Var& h, const Var& c,
                                  const ConvLstmVars& w) {
  check_same_shape(h, c, "convlstm_step");
  Var gates = convlstm_gates(g, x, h, w);
  const std::size_t f = gates->value.shape().back() / 4;

  // fused cell update: one node carries (h' | c') packed on the channel axis
  //   c' = f.c + i.g~ ;  h' = o.tanh(c')
  Tensor packed(with_last_dim(c->value.shape(), 2 * f));
  const std::size_t cells = c->value.size() / f;
  for (std::size_t i = 0; i < cells; ++i) {
    const double* gv = gates->value.data() + i * 4 * f;
    const double* cv = c->value.data() + i * f;
    double* out = packed.data() + i * 2 * f;
    for (std::size_t j = 0; j < f; ++j) {
      const double c_next = gv[f + j] * cv[j] + gv[j] * gv[2 * f + j];
      out[j] = gv[3 * f + j] * std::tanh(c_next);  // h'
      out[f + j] = c_next;
    }
  }
  Var cell = g.make(std::move(packed), {gates, c}, [f, cells](Node& self) {
    Node& pg = *self.parents[0];
    Node& pc = *self.parents[1];
    const bool need_g = pg.requires_grad;
    const bool need_c = pc.requires_grad;
    if (need_g && pg.grad.empty()) pg.grad = Tensor(pg.value.shape());
    if (need_c && pc.grad.empty()) pc.grad = Tensor(pc.value.shape());
    for (std::size_t i = 0; i < cells; ++i) {
      const double* gv = pg.value.data() + i * 4 * f;
      const double* cv = pc.value.data() + i * f;
      const double* out = self.value.data() + i * 2 * f;
      const double* gr = self.grad.data() + i * 2 * f;
      double* dg = need_g ? pg.grad.data() + i * 4 * f : nullptr;
      double* dc = need_c ? pc.grad.data() + i * f : nullptr;
      for (std::size_t j = 0; j < f; ++j) {
        const double gi = gv[j], gf = gv[f + j], gg = gv[2 * f + j], go = gv[3 * f + j];
        const double tc = std::tanh(out[f + j]);  // from the stored c'
        const double dh = gr[j];
        // total cell gradient: external dc' plus the h' = o.tanh(c') path
        const double dct = gr[f + j] + dh * go * (1.0 - tc * tc);
        if (dg) {
          dg[j] += dct * gg;          // di
          dg[f + j] += dct * cv[j];   // df
          dg[2 * f + j] += dct * gi;  // dg~
          dg[3 * f + j] += dh * tc;   // do
        }
        if (dc) dc[j] += dct * gf;
      }
    }
  });
  return {slice_channels(g, cell, 0, f), slice_channels(g, cell, f, f)};
}

// --- gradient check -----------------------------------------------------------

double gradient_check(const std::function<Var(Graph&, std::vector<Var>&)>& f,
                      const std::vector<Tensor>& point, double epsilon) {
  Graph g(true);
  std::vector<Var> leaves;
  leaves.reserve(point.size());
  for (const auto& t : point) leaves.push_back(g.leaf(t));
  Var loss = f(g, leaves);
  if (loss->value.size() != 1) throw DataError("gradient_check: function must be scalar");
  if (!std::isfinite(loss->value[0]))
    throw NumericError("gradient_check: non-finite function value");
  g.backward(loss);

  std::vector<Tensor> analytic;
  analytic.reserve(leaves.size());
  for (const auto& l : leaves)
    analytic.push_back(l->grad.empty() ? Tensor(l->value.shape()) : l->grad);

  auto eval = [&f](const std::vector<Tensor>& at) {
    Graph gi(false);
    std::vector<Var> ls;
    ls.reserve(at.size());
    for (const auto& t : at) ls.push_back(gi.leaf(t, false));
    Var v = f(gi, ls);
    if (!std::isfinite(v->value[0]))
      throw NumericError("gradient_check: non-finite function value");
    return v->value[0];
  };

  double worst = 0.0;
  std::vector<Tensor> probe = point;
  for (std::size_t p = 0; p < point.size(); ++p) {
    for (std::size_t i = 0; i < point[p].size(); ++i) {
      const double orig = probe[p][i];
      probe[p][i] = orig + epsilon;
      const double up = eval(probe);
      probe[p][i] = orig - epsilon;
      const double down = eval(probe);
      probe[p][i] = orig;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double a = analytic[p][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace aircast
