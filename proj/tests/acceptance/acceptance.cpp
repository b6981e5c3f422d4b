// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "creep/checkpoint.hpp"
#include "creep/latency.hpp"
#include "creep/training.hpp"
#include "harness.hpp"

#ifdef CREEP_HAVE_CLI
#include "creep/cli.hpp"
#endif

namespace fs = std::filesystem;
using namespace creep;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("creep_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

constexpr std::uint64_t kSeed = 42;
constexpr ModelKind kKinds[] = {ModelKind::Baseline, ModelKind::Transformer, ModelKind::Vae};

// ------------------------------------------------------------- criterion 1

Verdict pipeline_structure() {
  const auto start = Clock::now();
  std::size_t sequences = 0;
  PreparedData prepared;
#ifdef CREEP_HAVE_CLI
  const auto dir = scratch("pipeline");
  std::ostringstream out, err;
  if (cli::run({"--out", dir.string(), "generate"}, out, err) != 0 ||
      cli::run({"--out", dir.string(), "prepare"}, out, err) != 0) {
    return {false, "CLI failed: " + err.str()};
  }
  sequences = group_sequences(read_records_csv(dir / "dataset.csv")).size();
  prepared = read_prepared(dir / "prepared");
#else
  const auto lib = MaterialLibrary::inconel625();
  const auto records = records_from_curves(
      generate_grid(lib, default_stresses_mpa(), default_temperatures_c(), kDefaultSteps, kDefaultHorizonHours));
  sequences = group_sequences(records).size();
  prepared = prepare(records, SplitSpec::default_holdout(), kDefaultSteps);
#endif
  const double elapsed = seconds_since(start);
  const std::vector<SequenceKey> expected = {{700, 75}, {800, 100}, {900, 125}, {1000, 50}};
  const bool ok = sequences == 20 && prepared.train.size() == 16 && prepared.val.size() == 4 &&
                  prepared.val.keys == expected && elapsed < 5.0;
  return {ok, fmt("%zu sequences, %zu train / %zu val, validation keys %s, %.2f s", sequences, prepared.train.size(),
                  prepared.val.size(), prepared.val.keys == expected ? "as specified" : "WRONG", elapsed)};
}

// ------------------------------------------------------------- criterion 2

Verdict constitutive_law() {
  const auto start = Clock::now();
  const auto lib = MaterialLibrary::inconel625();
  double worst_ratio = 0.0;
  for (const auto& c : lib.constants()) {
    for (double s : default_stresses_mpa()) {
      const double ratio = norton_rate(c, 2 * s, c.temperature_c) / norton_rate(c, s, c.temperature_c);
      const double expected = std::pow(2.0, c.c2);
      worst_ratio = std::max(worst_ratio, std::abs(ratio - expected) / expected);
    }
  }
  double worst_euler = 0.0;
  for (const auto& c : lib.constants()) {
    for (double s : default_stresses_mpa()) {
      const LoadCase load{c.temperature_c, s};
      const auto exact = integrate_curve(c, load, kDefaultSteps, kDefaultHorizonHours, IntegrationMethod::ClosedForm);
      const auto euler = integrate_curve(c, load, kDefaultSteps, kDefaultHorizonHours, IntegrationMethod::ExplicitEuler);
      for (std::size_t i = 1; i < exact.strains.size(); ++i) {
        worst_euler = std::max(worst_euler, std::abs(euler.strains[i] - exact.strains[i]) / exact.strains[i]);
      }
    }
  }
  const double elapsed = seconds_since(start);
  return {worst_ratio <= 1e-12 && worst_euler <= 1e-12 && elapsed < 1.0,
          fmt("stress-ratio error %.2e, euler vs closed form %.2e, %.3f s", worst_ratio, worst_euler, elapsed)};
}

// ------------------------------------------------------------- criterion 3

Verdict gradient_correctness() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  for (const auto& check : testing::layer_gradchecks(kSeed)) {
    if (check.result.max_rel_error >= worst) {
      worst = check.result.max_rel_error;
      worst_name = check.name;
    }
  }
  std::string models;
  for (auto kind : kKinds) {
    const auto r = testing::model_gradcheck(kind, kSeed);
    models += fmt(" %s %.1e", std::string(to_string(kind)).c_str(), r.max_rel_error);
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = std::string(to_string(kind)) + " model";
    }
  }
  const double elapsed = seconds_since(start);
  return {worst < 1e-4 && elapsed < 120.0,
          fmt("max relative error %.2e (%s); models:%s; %.1f s", worst, worst_name.c_str(), models.c_str(), elapsed)};
}

// ------------------------------------------------------------- criterion 4

Verdict forward_oracles() {
  using TensorD = Tensor<double>;
  double worst = 0.0;
  auto track = [&](double got, double want) { worst = std::max(worst, std::abs(got - want)); };
  SeededRng rng(kSeed);

  LstmParams<double> zero;
  zero.w_ih = TensorD::zeros({3, 16});
  zero.w_hh = TensorD::zeros({4, 16});
  zero.b_ih = TensorD::zeros({16});
  zero.b_hh = TensorD::zeros({16});
  const auto x = uniform<double>({2, 3}, -1, 1, rng);
  const auto c_prev = uniform<double>({2, 4}, -1, 1, rng);
  const auto from_zero = lstm_cell_step(zero, x, {TensorD::zeros({2, 4}), TensorD::zeros({2, 4})});
  for (std::size_t i = 0; i < 8; ++i) {
    track(from_zero.c.data()[i], 0.0);
    track(from_zero.h.data()[i], 0.0);
  }
  const auto carried = lstm_cell_step(zero, x, {TensorD::zeros({2, 4}), c_prev});
  for (std::size_t i = 0; i < 8; ++i) track(carried.c.data()[i], 0.5 * c_prev.data()[i]);

  MultiHeadAttention<double> mha(4, 2, rng);
  mha.q_proj.weight = TensorD::zeros({4, 4});
  mha.k_proj.weight = TensorD::zeros({4, 4});
  for (auto* proj : {&mha.v_proj, &mha.out_proj}) {
    proj->weight = TensorD::zeros({4, 4});
    for (std::size_t i = 0; i < 4; ++i) proj->weight.mutable_data()[i * 4 + i] = 1.0;
  }
  const auto v = uniform<double>({2, 5, 4}, -1, 1, rng);
  const auto attended = mha.forward(v, v, v);
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t c = 0; c < 4; ++c) {
      double avg = 0.0;
      for (std::size_t l = 0; l < 5; ++l) avg += v.at({b, l, c}) / 5;
      for (std::size_t l = 0; l < 5; ++l) track(attended.at({b, l, c}), avg);
    }
  }

  const auto pe = positional_encoding<double>(4, 64);
  for (std::size_t c = 0; c < 64; ++c) track(pe.at({0, c}), c % 2 == 0 ? 0.0 : 1.0);
  track(pe.at({1, 0}), 0.841471);

  const TensorD zeros({3, 20});
  track(kl_divergence(zeros, zeros).item(), 0.0);
  track(kl_divergence(TensorD({3, 20}, 1.0), zeros).item(), 0.5);
  track(kl_divergence(zeros, TensorD({3, 20}, std::log(2.0))).item(), 0.5 * (1 - std::log(2.0)));

  return {worst <= 1e-6, fmt("max deviation %.2e over LSTM cell, uniform attention, positional row 0, KL cases", worst)};
}

// ------------------------------------------------------------- criterion 5

struct Trained {
  TrainResult result;
  EvaluationResult in_memory;
  double seconds = 0.0;
};

const PreparedData& desk_data() {
  static const PreparedData data = testing::default_prepared(kDefaultSteps);
  return data;
}

std::map<ModelKind, Trained>& trained_models() {
  static std::map<ModelKind, Trained> cache = [] {
    std::map<ModelKind, Trained> out;
    for (auto kind : kKinds) {
      auto cfg = TrainingConfig::defaults(kind);
      cfg.seed = kSeed;
      const auto start = Clock::now();
      std::cerr << "training " << to_string(kind) << " for " << cfg.epochs << " epochs..." << std::endl;
      auto result = train_model(desk_data(), cfg);
      const double secs = seconds_since(start);
      auto eval = evaluate(result.checkpoint, desk_data());
      out.emplace(kind, Trained{std::move(result), eval, secs});
    }
    return out;
  }();
  return cache;
}

Verdict training_convergence() {
  const auto start = Clock::now();
  auto& models = trained_models();
  const std::map<ModelKind, double> floor = {
      {ModelKind::Baseline, 0.90}, {ModelKind::Transformer, 0.93}, {ModelKind::Vae, 0.93}};
  bool ok = true;
  std::string detail;
  for (auto kind : kKinds) {
    const auto& t = models.at(kind);
    const double r2 = t.in_memory.val.r2;
    ok = ok && r2 >= floor.at(kind);
    detail += fmt("%s val R2 %.4f (need >= %.2f, train R2 %.4f, best epoch %zu); ", std::string(to_string(kind)).c_str(),
                  r2, floor.at(kind), t.in_memory.train.r2, t.result.checkpoint.best_epoch);
  }
  const double elapsed = seconds_since(start);
  ok = ok && elapsed < 1800.0;
  return {ok, detail + fmt("%.0f s", elapsed)};
}

// ------------------------------------------------------------- criterion 6

Verdict latency_ordering() {
  const auto start = Clock::now();
  std::map<ModelKind, LatencyStats> stats;
  for (auto kind : kKinds) {
    const auto model = instantiate(trained_models().at(kind).result.checkpoint);
    stats[kind] = benchmark_latency(*model, 2000, 10, 2);
  }
  const double tr = stats[ModelKind::Transformer].mean_ms;
  const double vae = stats[ModelKind::Vae].mean_ms;
  const double base = stats[ModelKind::Baseline].mean_ms;
  const double elapsed = seconds_since(start);
  return {tr > vae && tr > base && elapsed < 300.0,
          fmt("L=2000, 10 reps: transformer %.2f ms, vae %.2f ms, baseline %.2f ms on %s", tr, vae, base,
              describe(host_info()).c_str())};
}

// ------------------------------------------------------------- criterion 7

bool same_metrics(const RegressionMetrics& a, const RegressionMetrics& b) {
  return a.rmse == b.rmse && a.r2 == b.r2 && a.mae == b.mae;
}

Verdict checkpoint_and_determinism() {
  const auto dir = scratch("checkpoint");
  bool reload_ok = true;
  for (auto kind : kKinds) {
    const auto& t = trained_models().at(kind);
    const auto path = dir / (std::string(to_string(kind)) + ".ckpt");
    save_checkpoint(t.result.checkpoint, path);
    const auto again = evaluate(load_checkpoint(path), desk_data());
    reload_ok = reload_ok && same_metrics(again.train, t.in_memory.train) && same_metrics(again.val, t.in_memory.val);
  }

  bool history_ok = true;
  std::string how;
#ifdef CREEP_HAVE_CLI
  how = "CLI train reruns";
  std::ostringstream out, err;
  const auto data_dir = dir / "data";
  write_prepared(desk_data(), data_dir / "prepared");
  for (auto kind : kKinds) {
    std::string first;
    for (int run = 0; run < 2; ++run) {
      const auto out_dir = dir / ("run" + std::to_string(run));
      const int code = cli::run({"--out", out_dir.string(), "--seed", std::to_string(kSeed), "train", "--model",
                                 std::string(to_string(kind)), "--epochs", "3", "--data",
                                 (data_dir / "prepared").string()},
                                out, err);
      const auto history = slurp(out_dir / (std::string(to_string(kind)) + "_history.csv"));
      history_ok = history_ok && code == 0 && !history.empty();
      if (run == 0) first = history;
      else history_ok = history_ok && history == first;
    }
  }
#else
  how = "library train reruns";
  for (auto kind : kKinds) {
    auto cfg = TrainingConfig::defaults(kind);
    cfg.epochs = 3;
    std::ostringstream a, b;
    write_history_csv(train_model(desk_data(), cfg).history, a);
    write_history_csv(train_model(desk_data(), cfg).history, b);
    history_ok = history_ok && a.str() == b.str();
  }
#endif
  return {reload_ok && history_ok,
          fmt("save/load/evaluate bit-exact: %s; history byte-identical across %s: %s", reload_ok ? "yes" : "NO",
              how.c_str(), history_ok ? "yes" : "NO")};
}

// ------------------------------------------------------------- criterion 8

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

Verdict invariant_suites() {
  const auto start = Clock::now();
  bool ok = true;
  std::size_t total_cases = 0;
  std::string failures;
  const auto outcomes = testing::invariant_suite(kSeed);
  for (const auto& o : outcomes) {
    total_cases += o.cases;
    if (!o.ok() || o.cases < 100) {
      ok = false;
      failures += " [" + o.name + ": " + std::to_string(o.failures) + "/" + std::to_string(o.cases) + ", " +
                  o.first_failure + "]";
    }
  }
  const double suite_seconds = seconds_since(start);

  // Loss decrease on the default-config histories trained for criterion 5.
  std::string decrease;
  for (auto kind : kKinds) {
    const auto& h = trained_models().at(kind).result.history;
    std::vector<double> head, tail;
    for (std::size_t i = 0; i < 10; ++i) {
      head.push_back(h[i].train_loss);
      tail.push_back(h[h.size() - 10 + i].train_loss);
    }
    const bool dropped = median(tail) < median(head);
    ok = ok && dropped;
    decrease += fmt(" %s %.3g -> %.3g%s", std::string(to_string(kind)).c_str(), median(head), median(tail),
                    dropped ? "" : " (NO DECREASE)");
  }
  ok = ok && suite_seconds < 300.0;
  return {ok, fmt("%zu properties, %zu cases, %.1f s%s; median train loss first/last 10 epochs:%s", outcomes.size(),
                  total_cases, suite_seconds, failures.c_str(), decrease.c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"pipeline structure", pipeline_structure},
      {"constitutive-law properties", constitutive_law},
      {"gradient correctness", gradient_correctness},
      {"forward oracles", forward_oracles},
      {"training convergence at desk scale", training_convergence},
      {"latency ordering", latency_ordering},
      {"checkpoint and determinism", checkpoint_and_determinism},
      {"invariant suites", invariant_suites},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(number)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << number << " (" << criteria[i].first
              << "): " << v.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
