#include "creep/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "creep/checkpoint.hpp"
#include "creep/dataset.hpp"
#include "creep/latency.hpp"
#include "creep/material.hpp"
#include "creep/models.hpp"
#include "creep/text.hpp"
#include "creep/training.hpp"

namespace creep::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Raised for malformed configuration that is not a library error.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Options are parsed into private slots and only copied over the
/// config-derived settings when given on the command line, so flags win.
class Overrides {
 public:
  template <typename T, typename Target = T>
  CLI::Option* option(CLI::App& app, const std::string& name, Target& target, const std::string& help) {
    auto slot = std::make_shared<T>();
    auto* opt = app.add_option(name, *slot, help);
    apply_.push_back([opt, slot, &target] {
      if (opt->count() > 0) target = *slot;
    });
    return opt;
  }

  CLI::Option* flag(CLI::App& app, const std::string& name, bool& target, const std::string& help) {
    auto slot = std::make_shared<bool>(false);
    auto* opt = app.add_flag(name, *slot, help);
    apply_.push_back([opt, slot, &target] {
      if (opt->count() > 0) target = *slot;
    });
    return opt;
  }

  void apply() const {
    for (const auto& f : apply_) f();
  }

 private:
  std::vector<std::function<void()>> apply_;
};

void reject_unknown(const json& block, const std::vector<std::string_view>& allowed, std::string_view where) {
  if (!block.is_object()) throw ConfigError(std::string(where) + " block must be a JSON object");
  for (const auto& [key, value] : block.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError("unknown key '" + key + "' in " + std::string(where) + " block");
    }
  }
}

template <typename T>
void read_key(const json& block, const char* key, T& target) {
  if (block.contains(key)) target = block.at(key).get<T>();
}

json block_of(const json& config, const char* name) {
  return config.contains(name) ? config.at(name) : json::object();
}

std::vector<SequenceKey> parse_key_list(const std::vector<std::string>& texts) {
  std::vector<SequenceKey> keys;
  for (const auto& text : texts) {
    const auto fields = split_fields(text, ':');
    if (fields.size() != 2) throw ConfigError("validation key '" + text + "' is not TEMP:STRESS");
    keys.push_back({parse_double(fields[0]), parse_double(fields[1])});
  }
  return keys;
}

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string display_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Baseline:
      return "Baseline LSTM";
    case ModelKind::Transformer:
      return "BiLSTM-Transformer";
    case ModelKind::Vae:
      return "BiLSTM-VAE";
  }
  return "unknown";
}

json metrics_json(const RegressionMetrics& m) { return {{"rmse", m.rmse}, {"r2", m.r2}, {"mae", m.mae}}; }

void write_json(const json& doc, const fs::path& destination) {
  std::ofstream out(destination);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + destination.string() + " for writing");
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + destination.string());
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
}

IntegrationMethod parse_method(const std::string& text) {
  if (text == "closed_form") return IntegrationMethod::ClosedForm;
  if (text == "explicit_euler") return IntegrationMethod::ExplicitEuler;
  throw ConfigError("unknown integration method '" + text + "'");
}

struct Global {
  std::string config_path;
  std::uint64_t seed = 42;
  std::string out = ".";
  json config = json::object();
};

// ---------------------------------------------------------------- generate

struct GenerateSettings {
  std::size_t n_steps = kDefaultSteps;
  double t_end = kDefaultHorizonHours;
  std::string units = "pa_hours";
  std::string method = "closed_form";
  std::vector<double> temperatures = default_temperatures_c();
  std::vector<double> stresses = default_stresses_mpa();
  double noise = 0.0;
};

void load(GenerateSettings& s, const json& block) {
  reject_unknown(block, {"n_steps", "t_end", "units", "method", "temperatures", "stresses", "noise"}, "generate");
  read_key(block, "n_steps", s.n_steps);
  read_key(block, "t_end", s.t_end);
  read_key(block, "units", s.units);
  read_key(block, "method", s.method);
  read_key(block, "temperatures", s.temperatures);
  read_key(block, "stresses", s.stresses);
  read_key(block, "noise", s.noise);
}

void run_generate(const Global& g, const GenerateSettings& s, std::ostream& out) {
  if (s.noise < 0.0) throw ConfigError("noise must be non-negative");
  const auto units = parse_unit_convention(s.units);
  const auto method = parse_method(s.method);
  const auto lib = MaterialLibrary::inconel625();
  auto curves = generate_grid(lib, s.stresses, s.temperatures, s.n_steps, s.t_end, units, method);
  if (s.noise > 0.0) curves = add_gaussian_noise(std::move(curves), s.noise, g.seed);

  const fs::path dir(g.out);
  ensure_directory(dir);
  const std::size_t rows = export_curves_csv(curves, dir / "dataset.csv");

  DatasetMetadata meta;
  meta.units = units;
  meta.stresses_mpa = s.stresses;
  meta.temperatures_c = s.temperatures;
  meta.n_steps = s.n_steps;
  meta.t_end_hours = s.t_end;
  meta.material = lib.name();
  for (double t : s.temperatures) meta.constants.push_back(lookup_constants(lib, t));
  meta.noise_stddev = s.noise;
  if (s.noise > 0.0) meta.noise_seed = g.seed;
  write_dataset_metadata(meta, dir / "dataset.meta.json");

  out << "generated " << curves.size() << " curves, " << rows << " rows, units " << to_string(units) << '\n';
}

// ----------------------------------------------------------------- prepare

struct PrepareSettings {
  std::string data;
  std::size_t subsample = kDefaultSteps;
  std::vector<SequenceKey> validation_keys = SplitSpec::default_holdout().validation_keys;
};

void load(PrepareSettings& s, const json& block) {
  reject_unknown(block, {"data", "subsample", "validation_keys"}, "prepare");
  read_key(block, "data", s.data);
  read_key(block, "subsample", s.subsample);
  if (block.contains("validation_keys")) {
    s.validation_keys.clear();
    for (const auto& k : block.at("validation_keys")) {
      if (!k.is_array() || k.size() != 2) throw ConfigError("validation_keys entries must be [temperature, stress]");
      s.validation_keys.push_back({k.at(0).get<double>(), k.at(1).get<double>()});
    }
  }
}

void run_prepare(const Global& g, const PrepareSettings& s, std::ostream& out) {
  const fs::path data = s.data.empty() ? fs::path(g.out) / "dataset.csv" : fs::path(s.data);
  const auto records = read_records_csv(data);

  UnitConvention units = UnitConvention::PaHours;
  fs::path meta_path = data;
  meta_path.replace_extension(".meta.json");
  if (fs::exists(meta_path)) units = read_dataset_metadata(meta_path).units;

  std::optional<std::size_t> subsample_to;
  if (s.subsample > 0) subsample_to = s.subsample;
  const auto prepared = prepare(records, SplitSpec{s.validation_keys}, subsample_to, units);

  const fs::path dir = fs::path(g.out) / "prepared";
  ensure_directory(dir);
  write_prepared(prepared, dir);
  out << "train: " << prepared.train.size() << " sequences, val: " << prepared.val.size() << " sequences, L="
      << prepared.train.length << '\n';
}

// ------------------------------------------------------------------- train

/// Flag-side mirror of TrainingConfig. Unset entries keep the model default.
struct TrainSettings {
  std::string model;
  std::string data;
  std::optional<std::size_t> epochs;
  std::optional<double> lr;
  std::optional<double> beta;
  std::optional<double> clip_norm;
  std::optional<bool> use_scheduler;
  std::optional<double> scheduler_factor;
  std::optional<std::size_t> scheduler_patience;
  std::optional<std::size_t> batch_size;
  std::optional<double> dropout;
  std::optional<bool> channel_attention;
  std::optional<std::size_t> attention_block_rows;
  bool record_timing = false;
  bool verbose = false;
};

const std::vector<std::string_view> kTrainKeys = {
    "epochs", "lr", "beta", "clip_norm", "use_scheduler", "scheduler_factor", "scheduler_patience",
    "batch_size", "dropout", "channel_attention", "attention_block_rows", "record_timing"};

void load_train_keys(TrainingConfig& c, const json& block) {
  read_key(block, "epochs", c.epochs);
  read_key(block, "lr", c.lr);
  read_key(block, "beta", c.beta);
  if (block.contains("clip_norm")) {
    const auto& v = block.at("clip_norm");
    if (v.is_null()) {
      c.clip_norm.reset();
    } else {
      c.clip_norm = v.get<double>();
    }
  }
  read_key(block, "use_scheduler", c.use_scheduler);
  read_key(block, "scheduler_factor", c.scheduler_factor);
  read_key(block, "scheduler_patience", c.scheduler_patience);
  read_key(block, "batch_size", c.batch_size);
  read_key(block, "dropout", c.model.dropout);
  read_key(block, "channel_attention", c.model.channel_attention);
  read_key(block, "attention_block_rows", c.model.attention_block_rows);
  read_key(block, "record_timing", c.record_timing);
}

/// Model defaults, then the shared train block, then the per-model block,
/// then flags.
TrainingConfig resolve_training(const Global& g, const TrainSettings& s, ModelKind kind, std::string& data) {
  auto cfg = TrainingConfig::defaults(kind);
  const json block = block_of(g.config, "train");
  auto allowed = kTrainKeys;
  allowed.insert(allowed.end(), {"data", "baseline", "transformer", "vae"});
  reject_unknown(block, allowed, "train");
  load_train_keys(cfg, block);
  read_key(block, "data", data);
  const std::string name(to_string(kind));
  if (block.contains(name)) {
    const auto& per_model = block.at(name);
    reject_unknown(per_model, kTrainKeys, "train." + name);
    load_train_keys(cfg, per_model);
  }

  if (s.epochs) cfg.epochs = *s.epochs;
  if (s.lr) cfg.lr = *s.lr;
  if (s.beta) cfg.beta = *s.beta;
  if (s.clip_norm) {
    if (*s.clip_norm > 0.0) {
      cfg.clip_norm = *s.clip_norm;
    } else {
      cfg.clip_norm.reset();
    }
  }
  if (s.use_scheduler) cfg.use_scheduler = *s.use_scheduler;
  if (s.scheduler_factor) cfg.scheduler_factor = *s.scheduler_factor;
  if (s.scheduler_patience) cfg.scheduler_patience = *s.scheduler_patience;
  if (s.batch_size) cfg.batch_size = *s.batch_size;
  if (s.dropout) cfg.model.dropout = *s.dropout;
  if (s.channel_attention) cfg.model.channel_attention = *s.channel_attention;
  if (s.attention_block_rows) cfg.model.attention_block_rows = *s.attention_block_rows;
  if (s.record_timing) cfg.record_timing = true;
  if (!s.data.empty()) data = s.data;
  cfg.seed = g.seed;

  if (!(cfg.model.dropout >= 0.0 && cfg.model.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (cfg.model.attention_block_rows == 0) throw ConfigError("attention_block_rows must be positive");
  return cfg;
}

void print_epoch(std::ostream& out, const char* label, const EpochMetrics& m) {
  out << label << " epoch " << m.epoch << ": train RMSE " << format_metric(m.train.rmse) << " R2 "
      << format_metric(m.train.r2) << " MAE " << format_metric(m.train.mae) << " | val RMSE "
      << format_metric(m.val.rmse) << " R2 " << format_metric(m.val.r2) << " MAE " << format_metric(m.val.mae)
      << '\n';
}

void run_train(const Global& g, const TrainSettings& s, std::ostream& out) {
  if (s.model.empty()) throw ConfigError("train needs --model {baseline,transformer,vae}");
  const auto kind = parse_model_kind(s.model);
  std::string data_dir;
  const auto cfg = resolve_training(g, s, kind, data_dir);
  const fs::path data = data_dir.empty() ? fs::path(g.out) / "prepared" : fs::path(data_dir);
  const auto prepared = read_prepared(data);

  EpochCallback progress;
  if (s.verbose) progress = [&out](const EpochMetrics& m) { print_epoch(out, "", m); };
  const auto result = train_model(prepared, cfg, progress);

  const fs::path dir(g.out);
  ensure_directory(dir);
  const std::string name(to_string(kind));
  save_checkpoint(result.checkpoint, dir / (name + ".ckpt"));
  write_history_csv(result.history, dir / (name + "_history.csv"));

  print_epoch(out, "final", result.history.back());
  print_epoch(out, "best", result.history.at(best_epoch_index(result.history)));
  out << "wrote " << (dir / (name + ".ckpt")).string() << " and " << (dir / (name + "_history.csv")).string()
      << '\n';
}

// -------------------------------------------------------------------- eval

struct EvalSettings {
  std::vector<std::string> checkpoints;
  std::string data;
};

void run_eval(const Global& g, EvalSettings s, std::ostream& out) {
  const json block = block_of(g.config, "eval");
  reject_unknown(block, {"checkpoints", "data"}, "eval");
  if (s.checkpoints.empty()) read_key(block, "checkpoints", s.checkpoints);
  if (s.data.empty()) read_key(block, "data", s.data);
  if (s.checkpoints.empty()) throw ConfigError("eval needs at least one checkpoint");

  const fs::path data = s.data.empty() ? fs::path(g.out) / "prepared" : fs::path(s.data);
  const auto prepared = read_prepared(data);

  json rows = json::array();
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %12s %12s %12s %12s %12s %12s\n", "Model", "Train RMSE", "Train R2",
                "Train MAE", "Val RMSE", "Val R2", "Val MAE");
  std::string table = line;
  for (const auto& path : s.checkpoints) {
    const auto ckpt = load_checkpoint(path);
    const auto result = evaluate(ckpt, prepared);
    std::snprintf(line, sizeof line, "%-20s %12s %12s %12s %12s %12s %12s\n", display_name(ckpt.kind()).c_str(),
                  format_metric(result.train.rmse).c_str(), format_metric(result.train.r2).c_str(),
                  format_metric(result.train.mae).c_str(), format_metric(result.val.rmse).c_str(),
                  format_metric(result.val.r2).c_str(), format_metric(result.val.mae).c_str());
    table += line;
    rows.push_back({{"model", std::string(to_string(ckpt.kind()))},
                    {"label", display_name(ckpt.kind())},
                    {"checkpoint", path},
                    {"best_epoch", ckpt.best_epoch},
                    {"train", metrics_json(result.train)},
                    {"val", metrics_json(result.val)}});
  }
  const fs::path dir(g.out);
  ensure_directory(dir);
  write_json({{"unit_convention", std::string(to_string(prepared.units))}, {"models", rows}}, dir / "eval.json");
  out << table;
}

// ------------------------------------------------------------------- bench

struct BenchSettings {
  std::vector<std::string> checkpoints;
  std::vector<std::string> models;
  std::vector<std::size_t> lengths = {500, 2000};
  std::size_t reps = 10;
  std::size_t warmup = 2;
};

void load(BenchSettings& s, const json& block) {
  reject_unknown(block, {"checkpoints", "models", "lengths", "reps", "warmup"}, "bench");
  read_key(block, "checkpoints", s.checkpoints);
  read_key(block, "models", s.models);
  read_key(block, "lengths", s.lengths);
  read_key(block, "reps", s.reps);
  read_key(block, "warmup", s.warmup);
}

void run_bench(const Global& g, const BenchSettings& s, std::ostream& out) {
  if (s.checkpoints.empty() && s.models.empty()) throw ConfigError("bench needs checkpoints or --model");
  if (s.lengths.empty()) throw ConfigError("bench needs at least one length");
  if (s.reps < 3) throw ConfigError("bench needs reps >= 3");
  if (s.warmup < 1) throw ConfigError("bench needs warmup >= 1");

  struct Subject {
    std::string source;
    std::unique_ptr<Model<float>> model;
  };
  std::vector<Subject> subjects;
  for (const auto& path : s.checkpoints) subjects.push_back({path, instantiate(load_checkpoint(path))});
  for (const auto& name : s.models) {
    SeededRng rng = SeededRng(g.seed).fork(1);
    subjects.push_back({"untrained", make_model<float>(ModelConfig::defaults(parse_model_kind(name)), rng)});
  }

  json results = json::array();
  for (const auto& subject : subjects) {
    for (std::size_t length : s.lengths) {
      const auto stats = benchmark_latency(*subject.model, length, s.reps, s.warmup);
      results.push_back({{"model", std::string(to_string(subject.model->kind()))},
                         {"source", subject.source},
                         {"length", length},
                         {"reps", s.reps},
                         {"warmup", s.warmup},
                         {"mean_ms", stats.mean_ms},
                         {"std_ms", stats.std_ms},
                         {"min_ms", stats.min_ms},
                         {"max_ms", stats.max_ms}});
      char line[160];
      std::snprintf(line, sizeof line, "%-12s L=%-6zu mean %10.3f ms  std %8.3f ms\n",
                    std::string(to_string(subject.model->kind())).c_str(), length, stats.mean_ms, stats.std_ms);
      out << line;
    }
  }
  const auto host = host_info();
  const json report = {{"host",
                        {{"cpu_model", host.cpu_model},
                         {"logical_cores", host.logical_cores},
                         {"compiler", host.compiler},
                         {"build_type", host.build_type},
                         {"description", describe(host)}}},
                       {"threads", 1},
                       {"results", results}};
  const fs::path dir(g.out);
  ensure_directory(dir);
  write_json(report, dir / "bench.json");
  out << "host: " << describe(host) << '\n';
}

// ----------------------------------------------------------------- predict

struct PredictSettings {
  std::string checkpoint;
  std::optional<double> temperature;
  std::optional<double> stress;
  double t_end = kDefaultHorizonHours;
  std::size_t n_steps = kDefaultSteps;
  std::size_t uncertainty = 0;
  std::string output;
};

void load(PredictSettings& s, const json& block) {
  reject_unknown(block, {"checkpoint", "temperature", "stress", "t_end", "n_steps", "uncertainty", "output"},
                 "predict");
  read_key(block, "checkpoint", s.checkpoint);
  if (block.contains("temperature")) s.temperature = block.at("temperature").get<double>();
  if (block.contains("stress")) s.stress = block.at("stress").get<double>();
  read_key(block, "t_end", s.t_end);
  read_key(block, "n_steps", s.n_steps);
  read_key(block, "uncertainty", s.uncertainty);
  read_key(block, "output", s.output);
}

double to_strain(double scaled, const MinMaxScaler& target) {
  return std::max(0.0, inverse_log_transform(target.inverse(scaled)));
}

void run_predict(const Global& g, const PredictSettings& s, std::ostream& out, std::ostream& err) {
  if (s.checkpoint.empty()) throw ConfigError("predict needs a checkpoint");
  if (!s.temperature || !s.stress) throw ConfigError("predict needs --temperature and --stress");
  if (!(s.t_end > 0.0)) throw ConfigError("t_end must be positive");
  if (s.n_steps < 2) throw ConfigError("n_steps must be at least 2");

  const auto ckpt = load_checkpoint(s.checkpoint);
  if (s.uncertainty > 0 && ckpt.kind() != ModelKind::Vae) {
    throw ConfigError("--uncertainty needs a vae checkpoint, got " + std::string(to_string(ckpt.kind())));
  }
  if (s.uncertainty == 1) throw Error(ErrorKind::InvalidK, "uncertainty needs at least 2 draws");
  const auto model = instantiate(ckpt);

  const std::size_t n = s.n_steps;
  std::vector<double> times(n);
  for (std::size_t i = 0; i < n; ++i) times[i] = s.t_end * static_cast<double>(i) / static_cast<double>(n - 1);

  const auto& fs_ = ckpt.feature_scalers;
  const std::array<double, kFeatureCount> raw_min = {*s.temperature, *s.stress, times.front()};
  const std::array<double, kFeatureCount> raw_max = {*s.temperature, *s.stress, times.back()};
  constexpr std::array<const char*, kFeatureCount> names = {"temperature", "stress", "time"};
  std::string outside;
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    constexpr double slack = 1e-12;
    if (fs_[f].transform(raw_min[f]) < -slack || fs_[f].transform(raw_max[f]) > 1.0 + slack) {
      if (!outside.empty()) outside += ", ";
      outside += std::string(names[f]) + " outside [" + format_double(fs_[f].min_val) + ", " +
                 format_double(fs_[f].max_val) + "]";
    }
  }
  if (!outside.empty()) err << "warning: extrapolating beyond the training envelope (" << outside << ")\n";

  std::vector<float> features(n * kFeatureCount);
  for (std::size_t i = 0; i < n; ++i) {
    features[i * kFeatureCount + kTemperature] = static_cast<float>(fs_[kTemperature].transform(*s.temperature));
    features[i * kFeatureCount + kStress] = static_cast<float>(fs_[kStress].transform(*s.stress));
    features[i * kFeatureCount + kTime] = static_cast<float>(fs_[kTime].transform(times[i]));
  }
  const Tensor<float> x({1, n, kFeatureCount}, std::move(features));
  const auto y = model->predict(x);

  std::vector<double> mean(n, 0.0), m2(n, 0.0);
  if (s.uncertainty > 0) {
    const auto& vae = dynamic_cast<const BiLstmVae<float>&>(*model);
    NoGradGuard no_grad;
    SeededRng rng = SeededRng(g.seed).fork(4);
    const auto enc = vae_encode(vae, x);
    for (std::size_t k = 0; k < s.uncertainty; ++k) {
      const auto z = reparameterize(enc.mu, enc.logvar, rng);
      const auto draw = vae_decode(vae, x, z, false, rng);
      const auto d = draw.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double v = to_strain(d[i], ckpt.target_scaler);
        const double delta = v - mean[i];
        mean[i] += delta / static_cast<double>(k + 1);
        m2[i] += delta * (v - mean[i]);
      }
    }
  }

  const fs::path destination = s.output.empty() ? fs::path(g.out) / "prediction.csv" : fs::path(s.output);
  if (destination.has_parent_path()) ensure_directory(destination.parent_path());
  std::ofstream csv(destination);
  if (!csv) throw Error(ErrorKind::IoFailure, "cannot open " + destination.string() + " for writing");
  csv << "timestamp,temperature,stress,predicted_strain";
  if (s.uncertainty > 0) csv << ",mean_strain,std_strain";
  csv << '\n';
  std::size_t floored = 0;
  const auto yd = y.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double raw = inverse_log_transform(ckpt.target_scaler.inverse(yd[i]));
    if (raw < 0.0) ++floored;
    csv << format_double(times[i]) << ',' << format_double(*s.temperature) << ',' << format_double(*s.stress) << ','
        << format_double(std::max(0.0, raw));
    if (s.uncertainty > 0) {
      csv << ',' << format_double(mean[i]) << ','
          << format_double(std::sqrt(m2[i] / static_cast<double>(s.uncertainty - 1)));
    }
    csv << '\n';
  }
  csv.flush();
  if (!csv) throw Error(ErrorKind::IoFailure, "write failed for " + destination.string());

  fs::path meta = destination;
  meta.replace_extension(".meta.json");
  write_json({{"checkpoint", s.checkpoint},
              {"model", std::string(to_string(ckpt.kind()))},
              {"temperature", *s.temperature},
              {"stress", *s.stress},
              {"t_end", s.t_end},
              {"n_steps", n},
              {"strain_floor", 0.0},
              {"floored_points", floored},
              {"extrapolation", !outside.empty()},
              {"uncertainty_draws", s.uncertainty}},
             meta);
  out << "wrote " << n << " points to " << destination.string() << '\n';
}

json read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoFailure, "cannot open config " + path);
  try {
    auto doc = json::parse(in);
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
    return doc;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

ExitCode exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::IoFailure:
    case ErrorKind::FormatError:
      return kIoError;
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::DegenerateVariance:
      return kNumericalError;
    default:
      return kConfigError;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Creep strain surrogate models: data generation, training, evaluation and inference",
               "creep-surrogate"};
  app.require_subcommand(1);

  Global g;
  auto* config_opt = app.add_option("--config", g.config_path, "JSON config with per-command blocks");
  auto* seed_opt = app.add_option("--seed", g.seed, "Seed for every random stream (default 42)");
  auto* out_opt = app.add_option("--out", g.out, "Output directory (default .)");

  Overrides flags;

  GenerateSettings gen;
  auto* gen_cmd = app.add_subcommand("generate", "Write the synthetic creep dataset");
  flags.option<std::size_t>(*gen_cmd, "--n-steps", gen.n_steps, "Points per curve");
  flags.option<double>(*gen_cmd, "--t-end", gen.t_end, "Horizon in hours");
  flags.option<std::string>(*gen_cmd, "--units", gen.units, "pa_hours, mpa_hours or pa_seconds");
  flags.option<std::string>(*gen_cmd, "--method", gen.method, "closed_form or explicit_euler");
  flags.option<std::vector<double>>(*gen_cmd, "--temperatures", gen.temperatures, "Temperatures in degC");
  flags.option<std::vector<double>>(*gen_cmd, "--stresses", gen.stresses, "Stresses in MPa");
  flags.option<double>(*gen_cmd, "--noise", gen.noise, "Additive Gaussian noise stddev (0 = off)");

  PrepareSettings prep;
  std::vector<std::string> prep_keys;
  auto* prep_cmd = app.add_subcommand("prepare", "Group, split and scale a dataset");
  flags.option<std::string>(*prep_cmd, "--data", prep.data, "Dataset CSV (default <out>/dataset.csv)");
  flags.option<std::size_t>(*prep_cmd, "--subsample", prep.subsample, "Points per sequence (0 = keep all)");
  auto* keys_opt = prep_cmd->add_option("--val-key", prep_keys, "Validation key TEMP:STRESS (repeatable)");

  TrainSettings train;
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  train_cmd->add_option("--model", train.model, "baseline, transformer or vae");
  train_cmd->add_option("--data", train.data, "Prepared directory (default <out>/prepared)");
  flags.option<std::size_t>(*train_cmd, "--epochs", train.epochs, "Epochs");
  flags.option<double>(*train_cmd, "--lr", train.lr, "Initial learning rate");
  flags.option<double>(*train_cmd, "--beta", train.beta, "KL weight (vae)");
  flags.option<double>(*train_cmd, "--clip-norm", train.clip_norm, "Gradient max-norm (0 = off)");
  flags.option<bool>(*train_cmd, "--use-scheduler", train.use_scheduler, "Plateau scheduler on/off");
  flags.option<double>(*train_cmd, "--scheduler-factor", train.scheduler_factor, "Plateau factor");
  flags.option<std::size_t>(*train_cmd, "--scheduler-patience", train.scheduler_patience, "Plateau patience");
  flags.option<std::size_t>(*train_cmd, "--batch-size", train.batch_size, "Sequences per batch");
  flags.option<double>(*train_cmd, "--dropout", train.dropout, "Dropout probability");
  flags.option<bool>(*train_cmd, "--channel-attention", train.channel_attention,
                     "Feature attention over input channels");
  flags.option<std::size_t>(*train_cmd, "--attention-block-rows", train.attention_block_rows,
                            "Query rows per attention block");
  train_cmd->add_flag("--record-timing", train.record_timing, "Fill the epoch_seconds column");
  train_cmd->add_flag("--verbose", train.verbose, "Print every epoch");

  EvalSettings eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score checkpoints on prepared data");
  eval_cmd->add_option("checkpoints", eval.checkpoints, "Checkpoint files");
  eval_cmd->add_option("--data", eval.data, "Prepared directory (default <out>/prepared)");

  BenchSettings bench;
  auto* bench_cmd = app.add_subcommand("bench", "Time eval-mode inference");
  flags.option<std::vector<std::string>>(*bench_cmd, "checkpoints", bench.checkpoints, "Checkpoint files");
  flags.option<std::vector<std::string>>(*bench_cmd, "--model", bench.models, "Untrained default model kinds");
  flags.option<std::vector<std::size_t>>(*bench_cmd, "--lengths", bench.lengths, "Sequence lengths");
  flags.option<std::size_t>(*bench_cmd, "--reps", bench.reps, "Timed repetitions (>= 3)");
  flags.option<std::size_t>(*bench_cmd, "--warmup", bench.warmup, "Untimed warmup passes (>= 1)");

  PredictSettings pred;
  auto* pred_cmd = app.add_subcommand("predict", "Predict a creep curve for one load case");
  flags.option<std::string>(*pred_cmd, "checkpoint", pred.checkpoint, "Checkpoint file");
  flags.option<double>(*pred_cmd, "--temperature", pred.temperature, "Temperature in degC");
  flags.option<double>(*pred_cmd, "--stress", pred.stress, "Stress in MPa");
  flags.option<double>(*pred_cmd, "--t-end", pred.t_end, "Horizon in hours");
  flags.option<std::size_t>(*pred_cmd, "--n-steps", pred.n_steps, "Points on the curve");
  flags.option<std::size_t>(*pred_cmd, "--uncertainty", pred.uncertainty, "Latent draws for mean/std (vae only)");
  flags.option<std::string>(*pred_cmd, "--output", pred.output, "CSV path (default <out>/prediction.csv)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kConfigError;
  }

  try {
    if (config_opt->count() > 0) {
      g.config = read_config(g.config_path);
      reject_unknown(g.config, {"seed", "out", "generate", "prepare", "train", "eval", "bench", "predict"},
                     "top-level");
      if (seed_opt->count() == 0) read_key(g.config, "seed", g.seed);
      if (out_opt->count() == 0) read_key(g.config, "out", g.out);
    }

    if (gen_cmd->parsed()) {
      load(gen, block_of(g.config, "generate"));
      flags.apply();
      run_generate(g, gen, out);
    } else if (prep_cmd->parsed()) {
      load(prep, block_of(g.config, "prepare"));
      flags.apply();
      if (keys_opt->count() > 0) prep.validation_keys = parse_key_list(prep_keys);
      run_prepare(g, prep, out);
    } else if (train_cmd->parsed()) {
      flags.apply();
      run_train(g, train, out);
    } else if (eval_cmd->parsed()) {
      run_eval(g, eval, out);
    } else if (bench_cmd->parsed()) {
      load(bench, block_of(g.config, "bench"));
      flags.apply();
      run_bench(g, bench, out);
    } else if (pred_cmd->parsed()) {
      load(pred, block_of(g.config, "predict"));
      flags.apply();
      run_predict(g, pred, out, err);
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const nlohmann::json::exception& e) {
    err << "error: bad config value: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
  return kSuccess;
}

}  // namespace creep::cli
