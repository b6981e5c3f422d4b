#include "creep/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>

#include "creep/error.hpp"
#include "creep/text.hpp"

namespace creep {

template <typename T>
void adam_step(AdamState<T>& state, std::span<Tensor<T>> params, std::span<const Tensor<T>> grads) {
  if (params.size() != grads.size()) {
    throw Error(ErrorKind::ShapeMismatch, "adam: " + std::to_string(params.size()) + " params but " +
                                              std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape()) {
      throw Error(ErrorKind::ShapeMismatch, "adam: parameter " + std::to_string(i) + " is " +
                                                shape_str(params[i].shape()) + ", gradient " +
                                                shape_str(grads[i].shape()));
    }
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), T{0});
      state.v.emplace_back(p.numel(), T{0});
    }
  }
  if (state.m.size() != params.size()) {
    throw Error(ErrorKind::ShapeMismatch, "adam: parameter list changed between steps");
  }
  ++state.t;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].mutable_data();
    const auto g = grads[i].data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = g[j];
      const double mj = state.beta1 * static_cast<double>(m[j]) + (1.0 - state.beta1) * gj;
      const double vj = state.beta2 * static_cast<double>(v[j]) + (1.0 - state.beta2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double m_hat = mj / correction1;
      const double v_hat = vj / correction2;
      p[j] = static_cast<T>(static_cast<double>(p[j]) - state.lr * m_hat / (std::sqrt(v_hat) + state.eps));
    }
  }
}

template <typename T>
double global_norm(std::span<const Tensor<T>> grads) {
  double total = 0.0;
  for (const auto& g : grads) {
    for (const T v : g.data()) total += static_cast<double>(v) * static_cast<double>(v);
  }
  return std::sqrt(total);
}

template <typename T>
double clip_grad_norm(std::span<Tensor<T>> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw Error(ErrorKind::InvalidArgument, "max_norm must be positive");
  const double norm = global_norm(std::span<const Tensor<T>>(grads.data(), grads.size()));
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& g : grads) {
      for (auto& v : g.mutable_data()) v = static_cast<T>(static_cast<double>(v) * factor);
    }
  }
  return norm;
}

double PlateauScheduler::step(double loss, double lr) {
  if (!best_ || loss < *best_) {
    best_ = loss;
    counter_ = 0;
    return lr;
  }
  ++counter_;
  if (counter_ > patience_) {
    counter_ = 0;
    return std::max(lr * factor_, min_lr_);
  }
  return lr;
}

RegressionMetrics regression_metrics(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) {
    throw Error(ErrorKind::ShapeMismatch, "metrics: " + std::to_string(predicted.size()) + " predictions vs " +
                                              std::to_string(truth.size()) + " targets");
  }
  if (truth.empty()) throw Error(ErrorKind::EmptyInput, "metrics of an empty set");
  const double n = static_cast<double>(truth.size());
  const double mean_y = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  double ss_res = 0.0;
  double ss_tot = 0.0;
  double abs_sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double r = predicted[i] - truth[i];
    ss_res += r * r;
    abs_sum += std::abs(r);
    ss_tot += (truth[i] - mean_y) * (truth[i] - mean_y);
  }
  if (ss_tot == 0.0) throw Error(ErrorKind::DegenerateVariance, "targets have zero variance; R² undefined");
  return {std::sqrt(ss_res / n), 1.0 - ss_res / ss_tot, abs_sum / n};
}

RegressionMetrics compute_metrics(std::span<const double> pred_scaled, std::span<const double> target_scaled,
                                  const MinMaxScaler& target_scaler) {
  if (pred_scaled.size() != target_scaled.size()) {
    throw Error(ErrorKind::ShapeMismatch, "metrics: " + std::to_string(pred_scaled.size()) + " predictions vs " +
                                              std::to_string(target_scaled.size()) + " targets");
  }
  std::vector<double> pred(pred_scaled.size());
  std::vector<double> truth(target_scaled.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred[i] = inverse_log_transform(target_scaler.inverse(pred_scaled[i]));
    truth[i] = inverse_log_transform(target_scaler.inverse(target_scaled[i]));
  }
  return regression_metrics(pred, truth);
}

TrainingConfig TrainingConfig::defaults(ModelKind kind) {
  TrainingConfig config;
  config.model = ModelConfig::defaults(kind);
  if (kind == ModelKind::Vae) {
    config.lr = 0.01;
    config.clip_norm = 1.0;
    config.use_scheduler = true;
  }
  return config;
}

void write_history_csv(const History& history, std::ostream& out) {
  out << "epoch,train_loss,val_loss,train_rmse,train_r2,train_mae,val_rmse,val_r2,val_mae,lr,epoch_seconds\n";
  for (const auto& e : history) {
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << ','
        << format_double(e.train.rmse) << ',' << format_double(e.train.r2) << ',' << format_double(e.train.mae)
        << ',' << format_double(e.val.rmse) << ',' << format_double(e.val.r2) << ',' << format_double(e.val.mae)
        << ',' << format_double(e.lr) << ',';
    if (e.epoch_seconds) out << format_double(*e.epoch_seconds);
    out << '\n';
  }
}

void write_history_csv(const History& history, const std::filesystem::path& destination) {
  std::ofstream out(destination, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoFailure, "cannot open " + destination.string() + " for writing");
  write_history_csv(history, out);
  out.flush();
  if (!out) throw Error(ErrorKind::IoFailure, "write failed for " + destination.string());
}

std::unique_ptr<Model<float>> instantiate(const ModelCheckpoint& checkpoint) {
  SeededRng rng(checkpoint.config.seed);
  auto model = make_model<float>(checkpoint.config.model, rng);
  auto params = model->parameters();
  if (params.size() != checkpoint.parameters.size()) {
    throw Error(ErrorKind::ArchitectureMismatch, "checkpoint has " + std::to_string(checkpoint.parameters.size()) +
                                                     " tensors, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, tensor] = params[i];
    const auto& [saved_name, saved] = checkpoint.parameters[i];
    if (name != saved_name || tensor.shape() != saved.shape()) {
      throw Error(ErrorKind::ArchitectureMismatch, "checkpoint tensor '" + saved_name + "' " +
                                                       shape_str(saved.shape()) + " does not match '" + name +
                                                       "' " + shape_str(tensor.shape()));
    }
    auto dst = params[i].second.mutable_data();
    std::copy(saved.data().begin(), saved.data().end(), dst.begin());
  }
  return model;
}

std::size_t best_epoch_index(const History& history) {
  if (history.empty()) throw Error(ErrorKind::EmptyInput, "empty history");
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    if (history[i].train.r2 > history[best].train.r2) best = i;
  }
  return best;
}

Tensor<float> batch_features(const SequenceSet& set, std::span<const std::size_t> indices) {
  const std::size_t per = set.length * kFeatureCount;
  std::vector<float> values(indices.size() * per);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto src = set.features.begin() + static_cast<std::ptrdiff_t>(indices[b] * per);
    std::transform(src, src + static_cast<std::ptrdiff_t>(per), values.begin() + static_cast<std::ptrdiff_t>(b * per),
                   [](double v) { return static_cast<float>(v); });
  }
  return Tensor<float>({indices.size(), set.length, kFeatureCount}, std::move(values));
}

Tensor<float> batch_targets(const SequenceSet& set, std::span<const std::size_t> indices) {
  const std::size_t per = set.length;
  std::vector<float> values(indices.size() * per);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto src = set.targets.begin() + static_cast<std::ptrdiff_t>(indices[b] * per);
    std::transform(src, src + static_cast<std::ptrdiff_t>(per), values.begin() + static_cast<std::ptrdiff_t>(b * per),
                   [](double v) { return static_cast<float>(v); });
  }
  return Tensor<float>({indices.size(), set.length, 1}, std::move(values));
}

namespace {

std::vector<std::size_t> all_indices(const SequenceSet& set) {
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

// Eval-mode loss over the whole set in one batch.
double eval_loss(const Model<float>& model, const SequenceSet& set, double beta) {
  NoGradGuard guard;
  SeededRng unused(0);
  const auto idx = all_indices(set);
  return model.loss(batch_features(set, idx), batch_targets(set, idx), false, unused, beta).total.item();
}

std::vector<Tensor<float>> tensors_of(const NamedParams<float>& params) {
  std::vector<Tensor<float>> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

NamedParams<float> snapshot(const NamedParams<float>& params) {
  NamedParams<float> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.emplace_back(name, t.detach());
  return out;
}

}  // namespace

std::vector<double> predict_set(const Model<float>& model, const SequenceSet& set) {
  if (set.size() == 0) return {};
  const auto idx = all_indices(set);
  const auto y = model.predict(batch_features(set, idx));
  return {y.data().begin(), y.data().end()};
}

TrainResult train_model(const PreparedData& data, const TrainingConfig& config, const EpochCallback& on_epoch) {
  if (data.train.size() == 0) throw Error(ErrorKind::EmptyInput, "training set is empty");
  if (data.val.size() == 0) throw Error(ErrorKind::EmptyInput, "validation set is empty");
  if (config.epochs == 0) throw Error(ErrorKind::InvalidArgument, "epochs must be at least 1");
  if (!(config.lr > 0.0)) throw Error(ErrorKind::InvalidArgument, "learning rate must be positive");
  if (config.batch_size == 0) throw Error(ErrorKind::InvalidArgument, "batch size must be at least 1");

  SeededRng root(config.seed);
  SeededRng init_rng = root.fork(1);
  SeededRng shuffle_rng = root.fork(2);
  SeededRng noise_rng = root.fork(3);

  auto model = make_model<float>(config.model, init_rng);
  const auto named = model->parameters();
  auto params = tensors_of(named);

  AdamState<float> adam;
  adam.lr = config.lr;
  PlateauScheduler scheduler(config.scheduler_factor, config.scheduler_patience);

  TrainResult result;
  auto& history = result.history;
  history.reserve(config.epochs);
  NamedParams<float> best_params;
  std::size_t best_index = 0;

  std::vector<std::size_t> order = all_indices(data.train);
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, count);
      const auto x = batch_features(data.train, idx);
      const auto y = batch_targets(data.train, idx);
      const auto terms = model->loss(x, y, true, noise_rng, config.beta);
      const double loss = terms.total.item();
      if (!std::isfinite(loss)) {
        throw Error(ErrorKind::NonFiniteLoss, "loss is " + format_double(loss) + " at epoch " +
                                                  std::to_string(epoch) + ", batch " + std::to_string(batches + 1));
      }
      auto grads = gradients(terms.total, params);
      if (config.clip_norm) clip_grad_norm<float>(grads, *config.clip_norm);
      adam_step<float>(adam, params, grads);
      loss_sum += loss;
      ++batches;
    }

    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.train_loss = loss_sum / static_cast<double>(batches);
    metrics.val_loss = eval_loss(*model, data.val, config.beta);
    metrics.train = compute_metrics(predict_set(*model, data.train), data.train.targets, data.target_scaler);
    metrics.val = compute_metrics(predict_set(*model, data.val), data.val.targets, data.target_scaler);
    metrics.lr = adam.lr;
    if (!std::isfinite(metrics.val_loss)) {
      throw Error(ErrorKind::NonFiniteLoss, "validation loss is " + format_double(metrics.val_loss) +
                                                " at epoch " + std::to_string(epoch));
    }
    if (config.use_scheduler) adam.lr = scheduler.step(metrics.val_loss, adam.lr);
    if (config.record_timing) {
      metrics.epoch_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    }

    history.push_back(metrics);
    if (history.size() == 1 || metrics.train.r2 > history[best_index].train.r2) {
      best_index = history.size() - 1;
      best_params = snapshot(named);
    }
    if (on_epoch) on_epoch(metrics);
  }

  auto& ckpt = result.checkpoint;
  ckpt.config = config;
  ckpt.parameters = std::move(best_params);
  ckpt.feature_scalers = data.feature_scalers;
  ckpt.target_scaler = data.target_scaler;
  ckpt.units = data.units;
  ckpt.validation_keys = data.split.validation_keys;
  ckpt.sequence_length = data.train.length;
  ckpt.best_epoch = history[best_index].epoch;
  ckpt.best_train_r2 = history[best_index].train.r2;
  return result;
}

namespace {

bool same_scaler(const MinMaxScaler& a, const MinMaxScaler& b) {
  return a.min_val == b.min_val && a.max_val == b.max_val;
}

}  // namespace

EvaluationResult evaluate(const ModelCheckpoint& checkpoint, const PreparedData& data) {
  if (checkpoint.config.model.input_dim != kFeatureCount) {
    throw Error(ErrorKind::ArchitectureMismatch, "checkpoint expects " +
                                                     std::to_string(checkpoint.config.model.input_dim) +
                                                     " input features, data has " + std::to_string(kFeatureCount));
  }
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    if (!same_scaler(checkpoint.feature_scalers[f], data.feature_scalers[f])) {
      throw Error(ErrorKind::ArchitectureMismatch, "feature scaler " + std::to_string(f) +
                                                       " differs from the one the checkpoint was trained with");
    }
  }
  if (!same_scaler(checkpoint.target_scaler, data.target_scaler)) {
    throw Error(ErrorKind::ArchitectureMismatch, "target scaler differs from the one the checkpoint was trained with");
  }
  const auto model = instantiate(checkpoint);
  EvaluationResult result;
  result.train = compute_metrics(predict_set(*model, data.train), data.train.targets, data.target_scaler);
  result.val = compute_metrics(predict_set(*model, data.val), data.val.targets, data.target_scaler);
  return result;
}

template void adam_step(AdamState<float>&, std::span<Tensor<float>>, std::span<const Tensor<float>>);
template void adam_step(AdamState<double>&, std::span<Tensor<double>>, std::span<const Tensor<double>>);
template double clip_grad_norm(std::span<Tensor<float>>, double);
template double clip_grad_norm(std::span<Tensor<double>>, double);
template double global_norm(std::span<const Tensor<float>>);
template double global_norm(std::span<const Tensor<double>>);

}  // namespace creep
