#include <doctest.h>

#include <cmath>
#include <sstream>

#include "aircast/evaluate.hpp"

using namespace aircast;

namespace {

Tensor frame2x2(double a, double b, double c, double d) {
  return Tensor({2, 2}, std::vector<double>{a, b, c, d});
}

// smooth blob translating one column per step with wrap-around
std::vector<Tensor> rolling_sequence(std::size_t rows, std::size_t cols, std::size_t steps) {
  std::vector<Tensor> frames;
  Tensor base({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const double dr = static_cast<double>(r) - static_cast<double>(rows) / 2.0;
      const double dc = static_cast<double>(c) - static_cast<double>(cols) / 3.0;
      base[r * cols + c] = 5.0 + 40.0 * std::exp(-(dr * dr + dc * dc) / 6.0);
    }
  for (std::size_t s = 0; s < steps; ++s) {
    Tensor shifted({rows, cols});
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        shifted[r * cols + (c + s) % cols] = base[r * cols + c];
    frames.push_back(std::move(shifted));
  }
  return frames;
}

// the true dynamics handed to a forecaster: shift one column right
Tensor shift_right(const Tensor& f) {
  const std::size_t rows = f.dim(0), cols = f.dim(1);
  Tensor out({rows, cols});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + (c + 1) % cols] = f[r * cols + c];
  return out;
}

}  // namespace

TEST_CASE("nrmse fundamentals") {
  SUBCASE("identity is zero") {
    Tensor t = frame2x2(1, 3, 1, 3);
    CHECK(nrmse(t, t) == doctest::Approx(0.0));
  }
  SUBCASE("hand-evaluated case") {
    // rmse = sqrt(2), mean = 2, nrmse = sqrt(2)/2
    Tensor truth = frame2x2(1, 3, 1, 3);
    Tensor pred = frame2x2(1, 3, 3, 1);
    CHECK(std::abs(nrmse(pred, truth) - std::sqrt(2.0) / 2.0) <= 1e-9);
    CHECK(nrmse(pred, truth) == doctest::Approx(0.7071).epsilon(1e-4));
  }
  SUBCASE("scale invariance") {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
      Tensor truth({3, 4});
      Tensor pred({3, 4});
      for (std::size_t i = 0; i < truth.size(); ++i) {
        truth[i] = rng.next_uniform(0.5, 10.0);
        pred[i] = rng.next_uniform(0.0, 10.0);
      }
      const double c = 7.0;
      Tensor truth_scaled({3, 4});
      Tensor pred_scaled({3, 4});
      for (std::size_t i = 0; i < truth.size(); ++i) {
        truth_scaled[i] = c * truth[i];
        pred_scaled[i] = c * pred[i];
      }
      CHECK(std::abs(nrmse(pred, truth) - nrmse(pred_scaled, truth_scaled)) <= 1e-12);
    }
  }
  SUBCASE("zero only when identical") {
    Tensor truth = frame2x2(1, 2, 3, 4);
    Tensor off = frame2x2(1, 2, 3, 4.0001);
    CHECK(nrmse(off, truth) > 0.0);
  }
  SUBCASE("nonpositive truth mean is undefined") {
    CHECK_THROWS_AS(nrmse(frame2x2(1, 1, 1, 1), frame2x2(0, 0, 0, 0)), DataError);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(nrmse(Tensor({2, 2}, 1.0), Tensor({2, 3}, 1.0)), DataError);
  }
}

TEST_CASE("add_noise") {
  Rng rng(2);
  std::vector<Tensor> frames;
  for (int i = 0; i < 100; ++i) frames.push_back(Tensor({40, 40}, 0.5));

  SUBCASE("sigma zero is the identity") {
    auto out = add_noise(frames, {0.0, 9});
    for (std::size_t s = 0; s < frames.size(); ++s)
      for (std::size_t i = 0; i < frames[s].size(); ++i)
        CHECK(out[s][i] == frames[s][i]);
  }
  SUBCASE("sigma 0.2 empirical deviation within 5%") {
    auto out = add_noise(frames, {0.2, 3});
    double sum = 0.0, sq = 0.0;
    std::size_t n = 0;
    for (std::size_t s = 0; s < frames.size(); ++s)
      for (std::size_t i = 0; i < frames[s].size(); ++i) {
        const double delta = out[s][i] - 0.5;
        sum += delta;
        sq += delta * delta;
        ++n;
      }
    const double std_dev =
        std::sqrt(sq / static_cast<double>(n) - (sum / n) * (sum / n));
    CHECK(std::abs(std_dev - 0.2) <= 0.05 * 0.2);
  }
  SUBCASE("outputs stay in [0, 1]") {
    auto out = add_noise(frames, {0.8, 4});
    for (const auto& f : out) {
      CHECK(f.min() >= 0.0);
      CHECK(f.max() <= 1.0);
    }
  }
  SUBCASE("equal seeds are deterministic") {
    auto a = add_noise(frames, {0.3, 5});
    auto b = add_noise(frames, {0.3, 5});
    for (std::size_t s = 0; s < a.size(); ++s)
      for (std::size_t i = 0; i < a[s].size(); ++i) CHECK(a[s][i] == b[s][i]);
  }
}

TEST_CASE("evaluate_horizons") {
  const int t_in = 3;
  // wide grid so the blob does not wrap within the evaluated horizons
  auto frames = rolling_sequence(8, 24, 40);
  std::vector<std::vector<Tensor>> sequences = make_eval_sequences(frames, t_in, 6);
  REQUIRE(!sequences.empty());
  const double theta_max = 60.0;

  SUBCASE("an oracle that knows the dynamics scores zero at every horizon") {
    Forecaster oracle = [](const std::vector<Tensor>& window) {
      return shift_right(window.back());
    };
    auto metrics = evaluate_horizons(oracle, sequences, t_in, 6, theta_max);
    for (const auto& m : metrics.per_horizon) CHECK(m.nrmse <= 1e-9);
  }
  SUBCASE("persistence on an advecting field degrades strictly with horizon") {
    auto metrics =
        evaluate_horizons(make_persistence_forecaster(), sequences, t_in, 6, theta_max);
    for (std::size_t h = 1; h < metrics.per_horizon.size(); ++h)
      CHECK(metrics.per_horizon[h].nrmse > metrics.per_horizon[h - 1].nrmse);
  }
  SUBCASE("H = 1 equals the direct one-step evaluation") {
    auto one = evaluate_horizons(make_persistence_forecaster(), sequences, t_in, 1, theta_max);
    auto many = evaluate_horizons(make_persistence_forecaster(), sequences, t_in, 6, theta_max);
    CHECK(one.per_horizon[0].nrmse == doctest::Approx(many.per_horizon[0].nrmse).epsilon(1e-14));
    // manual one-step check
    double total = 0.0;
    for (const auto& seq : sequences) {
      Tensor pred = seq[t_in - 1];  // persistence
      total += nrmse(pred, seq[t_in]);
    }
    CHECK(one.per_horizon[0].nrmse ==
          doctest::Approx(total / static_cast<double>(sequences.size())).epsilon(1e-12));
  }
  SUBCASE("too-short sequences are skipped with a count") {
    auto short_seqs = sequences;
    short_seqs.push_back(std::vector<Tensor>(4, frames[0]));  // < t_in + H
    auto metrics = evaluate_horizons(make_persistence_forecaster(), short_seqs, t_in, 6,
                                     theta_max);
    CHECK(metrics.skipped_sequences == 1);
    CHECK(metrics.per_horizon[0].count == sequences.size());
  }
}

TEST_CASE("robustness_sweep") {
  const int t_in = 3;
  auto frames = rolling_sequence(8, 8, 24);
  auto sequences = make_eval_sequences(frames, t_in, 3);
  const double theta_max = 60.0;
  std::vector<ModelUnderTest> models{
      {"persistence", 0, make_persistence_forecaster()},
      {"oracle", 0, Forecaster([](const std::vector<Tensor>& w) { return shift_right(w.back()); })},
  };

  SUBCASE("the sigma = 0 slice equals the plain evaluation") {
    auto report = robustness_sweep(models, sequences, t_in, 3, theta_max, {0.0, 0.1}, 4, 9);
    auto plain = compare_models(models, sequences, t_in, 3, theta_max);
    for (const auto& row : plain.rows) {
      for (const auto& rrow : report.rows)
        if (rrow.model == row.model && rrow.sigma == 0.0 && rrow.horizon == row.horizon)
          CHECK(rrow.nrmse == doctest::Approx(row.nrmse).epsilon(1e-14));
    }
  }
  SUBCASE("noise realizations do not depend on model order") {
    std::vector<ModelUnderTest> reversed{models[1], models[0]};
    auto a = robustness_sweep(models, sequences, t_in, 3, theta_max, {0.1}, 3, 5);
    auto b = robustness_sweep(reversed, sequences, t_in, 3, theta_max, {0.1}, 3, 5);
    for (const auto& ra : a.rows) {
      bool matched = false;
      for (const auto& rb : b.rows)
        if (ra.model == rb.model && ra.horizon == rb.horizon) {
          CHECK(ra.nrmse == doctest::Approx(rb.nrmse).epsilon(1e-14));
          matched = true;
        }
      CHECK(matched);
    }
  }
  SUBCASE("noise hurts the exact-dynamics oracle monotonically") {
    auto report =
        robustness_sweep(models, sequences, t_in, 3, theta_max, {0.0, 0.1, 0.2}, 10, 5);
    const double clean = report.mean_nrmse("oracle", 0.0);
    const double mid = report.mean_nrmse("oracle", 0.1);
    const double loud = report.mean_nrmse("oracle", 0.2);
    CHECK(clean <= mid + 0.005);
    CHECK(mid <= loud + 0.005);
  }
}

TEST_CASE("compare_models reports every requested model with its size") {
  const int t_in = 2;
  auto frames = rolling_sequence(6, 6, 14);
  auto sequences = make_eval_sequences(frames, t_in, 2);
  std::vector<ModelUnderTest> models{
      {"persistence", 0, make_persistence_forecaster()},
      {"blur", 123, Forecaster([](const std::vector<Tensor>& w) { return w.front(); })},
  };
  auto report = compare_models(models, sequences, t_in, 2, 60.0);
  REQUIRE(report.models.size() == 2);
  CHECK(report.models[0].first == "persistence");
  CHECK(report.models[0].second == 0);
  CHECK(report.models[1].first == "blur");
  CHECK(report.models[1].second == 123);
  CHECK(report.rows.size() == 4);  // 2 models x 2 horizons
  for (const auto& row : report.rows) CHECK(row.count == sequences.size());
}

TEST_CASE("metrics table format") {
  ComparisonReport report;
  report.models = {{"crnn", 1000}};
  report.rows = {{"crnn", 0.0, 1, 0.5, 0.5, 20}};
  std::ostringstream out;
  write_metrics(out, report);
  CHECK(out.str() == "model,sigma,horizon,nrmse,accuracy,n\ncrnn,0,1,0.5,0.5,20\n");
}

TEST_CASE("make_eval_sequences steps by the horizon") {
  auto frames = rolling_sequence(4, 4, 20);
  auto seqs = make_eval_sequences(frames, 3, 4);
  // spans of length 7 starting every 4 frames: 0, 4, 8, 12 -> 4 sequences
  CHECK(seqs.size() == 4);
  for (const auto& s : seqs) CHECK(s.size() == 7);
  CHECK(make_eval_sequences(frames, 18, 4).empty());
}
