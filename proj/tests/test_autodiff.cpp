#include <doctest.h>

#include <cmath>
#include <limits>

#include "aircast/autodiff.hpp"

using namespace aircast;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.next_uniform(lo, hi);
  return t;
}

// scalarizes an output with fixed random weights so every coordinate matters
Var weighted_sum(Graph& g, const Var& y, const Tensor& weights) {
  return sum_all(g, mul(g, y, g.constant(weights)));
}

}  // namespace

TEST_CASE("conv2d identity kernel reproduces the input") {
  Graph g(false);
  Rng rng(1);
  Tensor x = random_tensor({6, 7, 1}, rng, 0.0, 5.0);
  Tensor k({3, 3, 1, 1});
  k[4] = 1.0;  // center tap
  Var y = conv2d(g, g.leaf(x, false), g.leaf(k, false), nullptr);
  REQUIRE(y->value.same_shape(x));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y->value[i] == doctest::Approx(x[i]));
}

TEST_CASE("conv2d all-ones kernel on a constant field") {
  Graph g(false);
  Tensor x({5, 5, 1}, 7.0);
  Tensor k({3, 3, 1, 1}, 1.0);
  Var y = conv2d(g, g.leaf(x, false), g.leaf(k, false), nullptr);
  // direct summation oracle: interior sees 9 cells, corners 4
  CHECK(y->value[2 * 5 + 2] == doctest::Approx(63.0));
  CHECK(y->value[0] == doctest::Approx(28.0));
  CHECK(y->value[4] == doctest::Approx(28.0));
  CHECK(y->value[24] == doctest::Approx(28.0));
  CHECK(y->value[1] == doctest::Approx(42.0));  // edge: 6 cells
}

TEST_CASE("conv2d preserves spatial dims for 16 filters on 40x40") {
  Graph g(false);
  Rng rng(2);
  Tensor x = random_tensor({40, 40, 1}, rng);
  Tensor k = random_tensor({3, 3, 1, 16}, rng);
  Var y = conv2d(g, g.leaf(x, false), g.leaf(k, false), nullptr);
  CHECK(y->value.shape() == std::vector<std::size_t>{40, 40, 16});
}

TEST_CASE("conv2d shape errors") {
  Graph g(false);
  Rng rng(3);
  Tensor x = random_tensor({4, 4, 2}, rng);
  Tensor k = random_tensor({3, 3, 3, 1}, rng);  // channel mismatch
  CHECK_THROWS_AS(conv2d(g, g.leaf(x, false), g.leaf(k, false), nullptr), DataError);
  Tensor even = random_tensor({2, 2, 2, 1}, rng);
  CHECK_THROWS_AS(conv2d(g, g.leaf(x, false), g.leaf(even, false), nullptr), DataError);
}

TEST_CASE("conv2d is linear in its input") {
  Rng rng(4);
  Tensor k = random_tensor({3, 3, 2, 3}, rng);
  Tensor xa = random_tensor({5, 5, 2}, rng);
  Tensor xb = random_tensor({5, 5, 2}, rng);
  const double a = 1.7, b = -0.6;
  Tensor combo(xa.shape());
  for (std::size_t i = 0; i < combo.size(); ++i) combo[i] = a * xa[i] + b * xb[i];
  Graph g(false);
  Var kk = g.leaf(k, false);
  Var ya = conv2d(g, g.leaf(xa, false), kk, nullptr);
  Var yb = conv2d(g, g.leaf(xb, false), kk, nullptr);
  Var yc = conv2d(g, g.leaf(combo, false), kk, nullptr);
  for (std::size_t i = 0; i < yc->value.size(); ++i)
    CHECK(yc->value[i] ==
          doctest::Approx(a * ya->value[i] + b * yb->value[i]).epsilon(1e-10));
}

TEST_CASE("convlstm_step with zero weights") {
  Graph g(false);
  const std::size_t f = 3;
  Tensor w({3, 3, 2, 4 * f});
  Tensor u({3, 3, f, 4 * f});
  Tensor b({4 * f});
  Rng rng(5);
  Tensor x = random_tensor({1, 4, 4, 2}, rng);

  SUBCASE("zero state stays zero") {
    Var h0 = g.constant(Tensor({1, 4, 4, f}));
    Var c0 = g.constant(Tensor({1, 4, 4, f}));
    auto [h, c] = convlstm_step(g, g.leaf(x, false), h0, c0,
                                ConvLstmVars{g.leaf(w, false), g.leaf(u, false), g.leaf(b, false)});
    for (std::size_t i = 0; i < h->value.size(); ++i) {
      CHECK(h->value[i] == doctest::Approx(0.0));
      CHECK(c->value[i] == doctest::Approx(0.0));
    }
  }
  SUBCASE("constant cell state decays through the half-open gates") {
    Var h0 = g.constant(Tensor({1, 4, 4, f}));
    Var c0 = g.constant(Tensor({1, 4, 4, f}, 2.0));
    Tensor zero_x({1, 4, 4, 2});
    auto [h, c] = convlstm_step(g, g.leaf(zero_x, false), h0, c0,
                                ConvLstmVars{g.leaf(w, false), g.leaf(u, false), g.leaf(b, false)});
    const double expected_h = 0.5 * std::tanh(1.0);  // ~= 0.3808
    for (std::size_t i = 0; i < h->value.size(); ++i) {
      CHECK(c->value[i] == doctest::Approx(1.0));
      CHECK(h->value[i] == doctest::Approx(expected_h).epsilon(1e-12));
    }
    CHECK(expected_h == doctest::Approx(0.3808).epsilon(1e-3));
  }
}

TEST_CASE("convlstm parameter-count closed form") {
  // counting oracle: shapes of the three gate tensors
  auto count = [](std::size_t cin, std::size_t f) {
    return 3 * 3 * cin * 4 * f + 3 * 3 * f * 4 * f + 4 * f;
  };
  auto closed_form = [](std::size_t cin, std::size_t f) { return 4 * f * (9 * (cin + f) + 1); };
  CHECK(count(1, 16) == closed_form(1, 16));
  CHECK(closed_form(1, 16) == 9856);
  for (std::size_t cin : {1u, 3u, 16u})
    for (std::size_t f : {1u, 8u, 20u}) CHECK(count(cin, f) == closed_form(cin, f));
}

TEST_CASE("convlstm hidden state is bounded by 1 in magnitude") {
  Rng rng(6);
  Graph g(false);
  const std::size_t f = 4;
  Var w = g.leaf(random_tensor({3, 3, 2, 4 * f}, rng, -2.0, 2.0), false);
  Var u = g.leaf(random_tensor({3, 3, f, 4 * f}, rng, -2.0, 2.0), false);
  Var b = g.leaf(random_tensor({4 * f}, rng, -2.0, 2.0), false);
  Var h = g.constant(Tensor({2, 5, 5, f}));
  Var c = g.constant(Tensor({2, 5, 5, f}));
  for (int t = 0; t < 4; ++t) {
    Var x = g.leaf(random_tensor({2, 5, 5, 2}, rng, -3.0, 3.0), false);
    auto step = convlstm_step(g, x, h, c, ConvLstmVars{w, u, b});
    h = step.first;
    c = step.second;
    for (std::size_t i = 0; i < h->value.size(); ++i) CHECK(std::abs(h->value[i]) <= 1.0);
  }
}

TEST_CASE("batch_norm behavior") {
  Rng rng(7);
  SUBCASE("already-normalized batch passes through") {
    // two channels, values engineered to zero mean unit variance
    Tensor x({4, 2});
    const double vals[4] = {-1.0, 1.0, -1.0, 1.0};
    for (std::size_t i = 0; i < 4; ++i) {
      x[i * 2] = vals[i];
      x[i * 2 + 1] = -vals[i];
    }
    Graph g(true);
    BatchNormState state;
    Var gamma = g.leaf(Tensor({2}, 1.0), false);
    Var beta = g.leaf(Tensor({2}), false);
    Var y = batch_norm(g, g.leaf(x, false), gamma, beta, state, 1e-3, true);
    for (std::size_t i = 0; i < 8; ++i)
      CHECK(y->value[i] == doctest::Approx(x[i]).epsilon(1e-3));
  }
  SUBCASE("constant channel collapses to the shift") {
    Tensor x({5, 1}, 3.25);
    Graph g(true);
    BatchNormState state;
    Var gamma = g.leaf(Tensor({1}, 2.0), false);
    Var beta = g.leaf(Tensor({1}, 0.75), false);
    Var y = batch_norm(g, g.leaf(x, false), gamma, beta, state, 1e-3, true);
    // variance 0 with the eps guard: output = beta exactly up to the guard
    for (std::size_t i = 0; i < 5; ++i) CHECK(y->value[i] == doctest::Approx(0.75));
  }
  SUBCASE("inference is deterministic and uses running stats") {
    Tensor x = random_tensor({6, 3}, rng);
    BatchNormState state;
    state.running_mean = Tensor({3}, 0.5);
    state.running_var = Tensor({3}, 2.0);
    Graph g(false);
    Var gamma = g.leaf(Tensor({3}, 1.0), false);
    Var beta = g.leaf(Tensor({3}), false);
    Var a = batch_norm(g, g.leaf(x, false), gamma, beta, state, 1e-3, false);
    Var b = batch_norm(g, g.leaf(x, false), gamma, beta, state, 1e-3, false);
    for (std::size_t i = 0; i < a->value.size(); ++i) CHECK(a->value[i] == b->value[i]);
    CHECK(state.running_mean[0] == 0.5);  // inference never updates the stats
  }
  SUBCASE("zero-size batch is rejected") {
    Graph g(true);
    BatchNormState state;
    Var gamma = g.leaf(Tensor({1}, 1.0), false);
    Var beta = g.leaf(Tensor({1}), false);
    CHECK_THROWS_AS(
        batch_norm(g, g.leaf(Tensor({0, 1}), false), gamma, beta, state, 1e-3, true),
        DataError);
  }
}

TEST_CASE("backward on sum of squares") {
  Graph g(true);
  Var w = g.leaf(Tensor({}, std::vector<double>{3.0}));
  Var loss = sum_all(g, mul(g, w, w));
  CHECK(loss->value[0] == doctest::Approx(9.0));
  g.backward(loss);
  CHECK(w->grad[0] == doctest::Approx(6.0));
}

TEST_CASE("backward rejects non-scalar loss") {
  Graph g(true);
  Var w = g.leaf(Tensor({2}, 1.0));
  Var y = mul(g, w, w);
  CHECK_THROWS_AS(g.backward(y), DataError);
}

TEST_CASE("gradient_check on elementary functions") {
  SUBCASE("x squared at 1") {
    auto f = [](Graph& g, std::vector<Var>& leaves) {
      return sum_all(g, mul(g, leaves[0], leaves[0]));
    };
    CHECK(gradient_check(f, {Tensor({}, std::vector<double>{1.0})}) <= 1e-10);
  }
  SUBCASE("sigmoid layer") {
    Rng rng(8);
    Tensor x = random_tensor({7}, rng, -2.0, 2.0);
    Tensor w = random_tensor({7}, rng);
    auto f = [&w](Graph& g, std::vector<Var>& leaves) {
      return weighted_sum(g, sigmoid(g, leaves[0]), w);
    };
    CHECK(gradient_check(f, {x}) <= 1e-6);
  }
  SUBCASE("dropout at inference is the identity") {
    Rng rng(9);
    Tensor x = random_tensor({8}, rng);
    Tensor w = random_tensor({8}, rng);
    auto f = [&w](Graph& g, std::vector<Var>& leaves) {
      Rng mask_rng(0);
      Var y = dropout(g, leaves[0], 0.5, mask_rng, false);
      return weighted_sum(g, y, w);
    };
    CHECK(gradient_check(f, {x}) <= 1e-10);
  }
}

TEST_CASE("finite differences validate every primitive") {
  Rng rng(10);
  const double tol = 1e-4;
  const double eps = 1e-5;

  SUBCASE("conv2d") {
    for (int i = 0; i < 5; ++i) {
      Tensor x = random_tensor({6, 6, 2}, rng);
      Tensor k = random_tensor({3, 3, 2, 2}, rng);
      Tensor b = random_tensor({2}, rng);
      Tensor w = random_tensor({6, 6, 2}, rng);
      auto f = [&w](Graph& g, std::vector<Var>& leaves) {
        return weighted_sum(g, conv2d(g, leaves[0], leaves[1], leaves[2]), w);
      };
      CHECK(gradient_check(f, {x, k, b}, eps) <= tol);
    }
  }
  SUBCASE("conv3d") {
    for (int i = 0; i < 5; ++i) {
      Tensor x = random_tensor({1, 3, 4, 4, 2}, rng);
      Tensor k = random_tensor({3, 3, 3, 2, 1}, rng);
      Tensor b = random_tensor({1}, rng);
      Tensor w = random_tensor({1, 3, 4, 4, 1}, rng);
      auto f = [&w](Graph& g, std::vector<Var>& leaves) {
        return weighted_sum(g, conv3d(g, leaves[0], leaves[1], leaves[2]), w);
      };
      CHECK(gradient_check(f, {x, k, b}, eps) <= tol);
    }
  }
  SUBCASE("convlstm_step") {
    for (int i = 0; i < 5; ++i) {
      const std::size_t f_ch = 2;
      Tensor x = random_tensor({1, 4, 4, 1}, rng);
      Tensor h = random_tensor({1, 4, 4, f_ch}, rng, -0.5, 0.5);
      Tensor c = random_tensor({1, 4, 4, f_ch}, rng, -0.5, 0.5);
      Tensor w = random_tensor({3, 3, 1, 4 * f_ch}, rng);
      Tensor u = random_tensor({3, 3, f_ch, 4 * f_ch}, rng);
      Tensor b = random_tensor({4 * f_ch}, rng);
      Tensor wh = random_tensor({1, 4, 4, f_ch}, rng);
      Tensor wc = random_tensor({1, 4, 4, f_ch}, rng);
      auto f = [&wh, &wc](Graph& g, std::vector<Var>& leaves) {
        auto [hn, cn] = convlstm_step(g, leaves[0], leaves[1], leaves[2],
                                      ConvLstmVars{leaves[3], leaves[4], leaves[5]});
        return add(g, weighted_sum(g, hn, wh), weighted_sum(g, cn, wc));
      };
      CHECK(gradient_check(f, {x, h, c, w, u, b}, eps) <= tol);
    }
  }
  SUBCASE("chained convlstm over three steps") {
    const std::size_t f_ch = 2;
    Tensor x1 = random_tensor({1, 3, 3, 1}, rng);
    Tensor x2 = random_tensor({1, 3, 3, 1}, rng);
    Tensor x3 = random_tensor({1, 3, 3, 1}, rng);
    Tensor w = random_tensor({3, 3, 1, 4 * f_ch}, rng);
    Tensor u = random_tensor({3, 3, f_ch, 4 * f_ch}, rng);
    Tensor b = random_tensor({4 * f_ch}, rng);
    Tensor wh = random_tensor({1, 3, 3, f_ch}, rng);
    auto f = [&wh, f_ch](Graph& g, std::vector<Var>& leaves) {
      Var h = g.constant(Tensor({1, 3, 3, f_ch}));
      Var c = g.constant(Tensor({1, 3, 3, f_ch}));
      ConvLstmVars vars{leaves[3], leaves[4], leaves[5]};
      for (int t = 0; t < 3; ++t) {
        auto step = convlstm_step(g, leaves[static_cast<std::size_t>(t)], h, c, vars);
        h = step.first;
        c = step.second;
      }
      return weighted_sum(g, h, wh);
    };
    CHECK(gradient_check(f, {x1, x2, x3, w, u, b}, eps) <= tol);
  }
  SUBCASE("batch_norm training mode") {
    for (int i = 0; i < 5; ++i) {
      Tensor x = random_tensor({5, 3}, rng);
      Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
      Tensor beta = random_tensor({3}, rng);
      Tensor w = random_tensor({5, 3}, rng);
      auto f = [&w](Graph& g, std::vector<Var>& leaves) {
        BatchNormState state;  // fresh per evaluation: stats are a side channel
        return weighted_sum(
            g, batch_norm(g, leaves[0], leaves[1], leaves[2], state, 1e-3, true), w);
      };
      CHECK(gradient_check(f, {x, gamma, beta}, eps) <= tol);
    }
  }
  SUBCASE("dense") {
    for (int i = 0; i < 5; ++i) {
      Tensor x = random_tensor({4, 5}, rng);
      Tensor w = random_tensor({5, 3}, rng);
      Tensor b = random_tensor({3}, rng);
      Tensor ww = random_tensor({4, 3}, rng);
      auto f = [&ww](Graph& g, std::vector<Var>& leaves) {
        return weighted_sum(g, dense(g, leaves[0], leaves[1], leaves[2]), ww);
      };
      CHECK(gradient_check(f, {x, w, b}, eps) <= tol);
    }
  }
  SUBCASE("activations and arithmetic") {
    for (int i = 0; i < 5; ++i) {
      Tensor x = random_tensor({6}, rng, -2.0, 2.0);
      Tensor y = random_tensor({6}, rng, -2.0, 2.0);
      Tensor w = random_tensor({6}, rng);
      auto f = [&w](Graph& g, std::vector<Var>& leaves) {
        Var t = tanh_act(g, leaves[0]);
        Var s = sigmoid(g, leaves[1]);
        Var m = mul(g, t, s);
        Var a = add(g, m, scale(g, sub(g, leaves[0], leaves[1]), 0.25));
        return weighted_sum(g, a, w);
      };
      CHECK(gradient_check(f, {x, y}, eps) <= tol);
    }
  }
  SUBCASE("bce loss value and gradient") {
    Tensor p({1}, 0.5);
    Tensor y({1}, 1.0);
    Graph g(true);
    Var pv = g.leaf(p);
    Var loss = bce_loss(g, pv, y);
    CHECK(loss->value[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    g.backward(loss);
    CHECK(pv->grad[0] == doctest::Approx(-2.0));  // -1/(N*0.5), N = 1

    for (int i = 0; i < 5; ++i) {
      Tensor pred = random_tensor({8}, rng, 0.1, 0.9);
      Tensor target = random_tensor({8}, rng, 0.0, 1.0);
      auto f = [&target](Graph& gg, std::vector<Var>& leaves) {
        return bce_loss(gg, leaves[0], target);
      };
      CHECK(gradient_check(f, {pred}, eps) <= 1e-6);
    }
  }
  SUBCASE("dropout in training mode (fixed mask)") {
    for (int i = 0; i < 5; ++i) {
      Tensor x = random_tensor({10}, rng);
      Tensor w = random_tensor({10}, rng);
      auto f = [&w, i](Graph& g, std::vector<Var>& leaves) {
        Rng mask_rng(static_cast<std::uint64_t>(i));  // same mask every call
        return weighted_sum(g, dropout(g, leaves[0], 0.3, mask_rng, true), w);
      };
      CHECK(gradient_check(f, {x}, eps) <= tol);
    }
  }
  SUBCASE("shape ops") {
    Tensor x = random_tensor({2, 3, 2, 2, 1}, rng);
    Tensor w = random_tensor({2, 2, 2, 3}, rng);
    auto f = [&w](Graph& g, std::vector<Var>& leaves) {
      Var moved = time_to_channels(g, leaves[0]);  // [2,2,2,3]
      return weighted_sum(g, moved, w);
    };
    CHECK(gradient_check(f, {x}, eps) <= tol);

    Tensor w2 = random_tensor({2, 2}, rng);
    auto f2 = [&w2](Graph& g, std::vector<Var>& leaves) {
      Var t0 = time_slice(g, leaves[0], 0);  // [2,2,2,1]
      Var t2 = time_slice(g, leaves[0], 2);
      Var s = add(g, t0, t2);
      Var flat = reshape(g, s, {2, 4});
      return weighted_sum(g, slice_channels(g, flat, 1, 2), w2);
    };
    CHECK(gradient_check(f2, {x}, eps) <= tol);
  }
}

TEST_CASE("concat then split recovers both operands") {
  Rng rng(11);
  Graph g(false);
  Tensor a = random_tensor({2, 3, 3, 2}, rng);
  Tensor b = random_tensor({2, 3, 3, 5}, rng);
  Var joined = concat_channels(g, g.leaf(a, false), g.leaf(b, false));
  auto [left, right] = split_channels(g, joined, 2);
  REQUIRE(left->value.same_shape(a));
  REQUIRE(right->value.same_shape(b));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(left->value[i] == a[i]);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(right->value[i] == b[i]);
}

TEST_CASE("time_stack inverts time_slice") {
  Rng rng(12);
  Graph g(false);
  Tensor x = random_tensor({2, 4, 3, 3, 2}, rng);
  Var v = g.leaf(x, false);
  std::vector<Var> slices;
  for (std::size_t t = 0; t < 4; ++t) slices.push_back(time_slice(g, v, t));
  Var rebuilt = time_stack(g, slices);
  REQUIRE(rebuilt->value.same_shape(x));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(rebuilt->value[i] == x[i]);
}

TEST_CASE("deterministic forward with dropout disabled") {
  Rng rng(13);
  Tensor x = random_tensor({4, 4, 1}, rng);
  Tensor k = random_tensor({3, 3, 1, 2}, rng);
  auto run = [&]() {
    Graph g(false);
    Rng mask_rng(7);
    Var y = conv2d(g, g.leaf(x, false), g.leaf(k, false), nullptr);
    y = dropout(g, y, 0.0, mask_rng, true);  // rate 0: identity even in training
    y = sigmoid(g, y);
    return y->value;
  };
  Tensor first = run();
  Tensor second = run();
  for (std::size_t i = 0; i < first.size(); ++i) CHECK(first[i] == second[i]);
}

TEST_CASE("gradient_check rejects non-finite functions") {
  auto f = [](Graph& g, std::vector<Var>& leaves) {
    Tensor inf({}, std::vector<double>{std::numeric_limits<double>::infinity()});
    return mul(g, leaves[0], g.constant(inf));
  };
  CHECK_THROWS_AS(gradient_check(f, {Tensor({}, std::vector<double>{1.0})}), NumericError);
}
