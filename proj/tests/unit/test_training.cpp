#include <algorithm>
#include <cmath>
#include <sstream>

#include "creep/checkpoint.hpp"
#include "creep/error.hpp"
#include "creep/latency.hpp"
#include "creep/training.hpp"
#include "doctest.h"
#include "harness.hpp"

using namespace creep;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected creep::Error");
  return ErrorKind::InvalidArgument;
}

const PreparedData& small_data() {
  static const PreparedData data = testing::default_prepared(24);
  return data;
}

TrainingConfig quick(ModelKind kind, std::size_t epochs = 3) {
  auto cfg = TrainingConfig::defaults(kind);
  cfg.epochs = epochs;
  return cfg;
}

}  // namespace

TEST_CASE("adam") {
  std::vector<Tensor<double>> p = {Tensor<double>::scalar(0.5)};
  AdamState<double> state;
  adam_step<double>(state, p, std::vector<Tensor<double>>{Tensor<double>::scalar(1.0)});
  CHECK(p[0].item() - 0.5 == doctest::Approx(-0.000999999990).epsilon(1e-9));
  CHECK(state.t == 1);
  CHECK(state.m.size() == 1);

  std::vector<Tensor<double>> q = {Tensor<double>({3}, {1, 2, 3})};
  AdamState<double> fresh;
  adam_step<double>(fresh, q, std::vector<Tensor<double>>{Tensor<double>({3})});
  CHECK(q[0].values() == std::vector<double>{1, 2, 3});

  CHECK(kind_of([&] { adam_step<double>(fresh, q, std::vector<Tensor<double>>{Tensor<double>({2})}); }) ==
        ErrorKind::ShapeMismatch);
}

TEST_CASE("gradient clipping") {
  std::vector<Tensor<double>> g = {Tensor<double>({2}, {3, 4})};
  CHECK(clip_grad_norm<double>(g, 1.0) == 5.0);
  CHECK(g[0].data()[0] == doctest::Approx(0.6));
  CHECK(g[0].data()[1] == doctest::Approx(0.8));

  std::vector<Tensor<double>> small = {Tensor<double>({2}, {0.1, 0.2}), Tensor<double>({1}, {0.3})};
  const auto before = small[0].values();
  clip_grad_norm<double>(small, 1.0);
  CHECK(small[0].values() == before);
  CHECK(small[1].item() == 0.3);
}

TEST_CASE("plateau scheduler") {
  SUBCASE("improving losses never reduce") {
    PlateauScheduler s;
    double lr = 0.01;
    for (int e = 0; e < 100; ++e) lr = s.step(1.0 - 0.001 * e, lr);
    CHECK(lr == 0.01);
  }
  SUBCASE("constant loss") {
    PlateauScheduler s(0.5, 10);
    double lr = 0.01;
    std::vector<int> reductions;
    for (int epoch = 1; epoch <= 30; ++epoch) {
      const double next = s.step(1.0, lr);
      if (next < lr) reductions.push_back(epoch);
      lr = next;
    }
    REQUIRE(reductions.size() >= 2);
    CHECK(reductions[0] == 12);
    CHECK(reductions[1] == 23);
    CHECK(lr == doctest::Approx(0.0025));
  }
  SUBCASE("floor") {
    PlateauScheduler s(0.5, 0, 0.004);
    double lr = 0.01;
    for (int e = 0; e < 10; ++e) lr = s.step(1.0, lr);
    CHECK(lr == 0.004);
  }
}

TEST_CASE("regression metrics") {
  const std::vector<double> y = {1, 2, 3};
  const auto perfect = regression_metrics(y, y);
  CHECK(perfect.rmse == 0.0);
  CHECK(perfect.mae == 0.0);
  CHECK(perfect.r2 == 1.0);

  const std::vector<double> mean_pred = {2, 2, 2};
  CHECK(regression_metrics(mean_pred, y).r2 == doctest::Approx(0.0));

  const auto m = regression_metrics(std::vector<double>{1, 2, 2}, y);
  CHECK(m.r2 == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m.mae == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(m.rmse == doctest::Approx(std::sqrt(1.0 / 3)).epsilon(1e-15));

  CHECK(kind_of([] { regression_metrics(std::vector<double>{1, 2}, std::vector<double>{4, 4}); }) ==
        ErrorKind::DegenerateVariance);

  // scaled inputs go back through the scaler and the log transform
  const MinMaxScaler scaler{0.0, 2.0};
  const std::vector<double> scaled = {0.25, 0.5};
  const auto round = compute_metrics(scaled, scaled, scaler);
  CHECK(round.r2 == 1.0);
  const auto shifted = compute_metrics(std::vector<double>{0.25, 0.25}, scaled, scaler);
  CHECK(shifted.mae == doctest::Approx((std::exp(1.0) - std::exp(0.5)) / 2));
}

TEST_CASE("history and best epoch") {
  History h(5);
  const double r2[] = {0.1, 0.7, 0.7, 0.9, 0.2};
  for (std::size_t i = 0; i < 5; ++i) {
    h[i].epoch = i + 1;
    h[i].train.r2 = r2[i];
  }
  CHECK(best_epoch_index(h) == 3);
  h[4].train.r2 = 0.9;
  CHECK(best_epoch_index(h) == 3);

  std::ostringstream out;
  write_history_csv(h, out);
  const auto text = out.str();
  CHECK(text.substr(0, text.find('\n')) ==
        "epoch,train_loss,val_loss,train_rmse,train_r2,train_mae,val_rmse,val_r2,val_mae,lr,epoch_seconds");
  CHECK(std::count(text.begin(), text.end(), '\n') == 6);
}

TEST_CASE("training loop") {
  const auto cfg = quick(ModelKind::Baseline, 4);
  std::size_t callbacks = 0;
  const auto a = train_model(small_data(), cfg, [&](const EpochMetrics&) { ++callbacks; });
  CHECK(a.history.size() == 4);
  CHECK(callbacks == 4);
  const auto b = train_model(small_data(), cfg);
  std::ostringstream ha, hb;
  write_history_csv(a.history, ha);
  write_history_csv(b.history, hb);
  CHECK(ha.str() == hb.str());

  const auto best = best_epoch_index(a.history);
  CHECK(a.checkpoint.best_epoch == a.history[best].epoch);
  CHECK(a.checkpoint.best_train_r2 == a.history[best].train.r2);
  for (const auto& e : a.history) {
    CHECK(e.train.rmse >= e.train.mae);
    CHECK(e.train.r2 <= 1.0);
    CHECK_FALSE(e.epoch_seconds.has_value());
  }

  const auto eval = evaluate(a.checkpoint, small_data());
  CHECK(eval.train.r2 == doctest::Approx(a.history[best].train.r2).epsilon(1e-6));
  CHECK(eval.val.rmse == doctest::Approx(a.history[best].val.rmse).epsilon(1e-6));

  std::stringstream buffer;
  write_checkpoint(a.checkpoint, buffer);
  const auto reloaded = read_checkpoint(buffer);
  const auto eval2 = evaluate(reloaded, small_data());
  CHECK(eval2.train.rmse == eval.train.rmse);
  CHECK(eval2.val.r2 == eval.val.r2);
  CHECK(eval2.val.mae == eval.val.mae);
}

TEST_CASE("vae training uses clipping and the scheduler") {
  const auto cfg = TrainingConfig::defaults(ModelKind::Vae);
  CHECK(cfg.lr == 0.01);
  CHECK(cfg.clip_norm == std::optional<double>(1.0));
  CHECK(cfg.use_scheduler);
  CHECK(cfg.epochs == 100);
  const auto other = TrainingConfig::defaults(ModelKind::Transformer);
  CHECK(other.lr == 0.001);
  CHECK_FALSE(other.clip_norm.has_value());
  CHECK_FALSE(other.use_scheduler);

  const auto r = train_model(small_data(), quick(ModelKind::Vae, 3));
  CHECK(r.history.size() == 3);
  for (std::size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i].lr <= r.history[i - 1].lr);
}

TEST_CASE("timing is opt-in") {
  auto cfg = quick(ModelKind::Baseline, 2);
  cfg.record_timing = true;
  const auto r = train_model(small_data(), cfg);
  for (const auto& e : r.history) CHECK(e.epoch_seconds.has_value());
}

TEST_CASE("training failures") {
  PreparedData empty = small_data();
  empty.train = SequenceSet{};
  CHECK(kind_of([&] { train_model(empty, quick(ModelKind::Baseline)); }) == ErrorKind::EmptyInput);

  PreparedData poisoned = small_data();
  poisoned.train.targets[5] = std::nan("");
  CHECK(kind_of([&] { train_model(poisoned, quick(ModelKind::Baseline)); }) == ErrorKind::NonFiniteLoss);

  const auto r = train_model(small_data(), quick(ModelKind::Baseline, 1));
  PreparedData rescaled = small_data();
  rescaled.target_scaler.max_val *= 2;
  CHECK(kind_of([&] { evaluate(r.checkpoint, rescaled); }) == ErrorKind::ArchitectureMismatch);

  auto wrong = r.checkpoint;
  wrong.config.model.hidden_dim = 16;
  CHECK(kind_of([&] { instantiate(wrong); }) == ErrorKind::ArchitectureMismatch);
}

TEST_CASE("checkpoint format errors") {
  std::istringstream empty("");
  CHECK(kind_of([&] { read_checkpoint(empty); }) == ErrorKind::FormatError);
  const auto r = train_model(small_data(), quick(ModelKind::Baseline, 1));
  std::stringstream buffer;
  write_checkpoint(r.checkpoint, buffer);
  const auto text = buffer.str();
  std::istringstream truncated(text.substr(0, text.size() - 4));
  CHECK(kind_of([&] { read_checkpoint(truncated); }) == ErrorKind::FormatError);
  CHECK(kind_of([] { load_checkpoint("/nonexistent/x.ckpt"); }) == ErrorKind::IoFailure);
}

TEST_CASE("latency harness") {
  SeededRng rng(1);
  const auto model = make_model<float>(ModelConfig::defaults(ModelKind::Transformer), rng);
  std::vector<double> means;
  for (std::size_t length : {500u, 1000u, 2000u}) {
    const auto stats = benchmark_latency(*model, length, 3, 1);
    CHECK(stats.per_rep_ms.size() == 3);
    CHECK(stats.mean_ms >= stats.min_ms);
    CHECK(stats.mean_ms <= stats.max_ms);
    CHECK(stats.std_ms >= 0.0);
    means.push_back(stats.mean_ms);
  }
  CHECK(means[1] >= means[0]);
  CHECK(means[2] >= means[1]);
  CHECK(kind_of([&] { benchmark_latency(*model, 10, 2, 1); }) == ErrorKind::InvalidArgument);
  CHECK(kind_of([&] { benchmark_latency(*model, 10, 3, 0); }) == ErrorKind::InvalidArgument);

  const auto seq = synthetic_sequence(5);
  CHECK(seq.shape() == Shape{1, 5, 3});
  CHECK(seq.at({0, 4, 2}) == 1.0f);
  CHECK(seq.at({0, 2, 0}) == 0.5f);
  CHECK_FALSE(describe(host_info()).empty());
}
