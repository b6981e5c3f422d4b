#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "creep/dataset.hpp"
#include "creep/models.hpp"

namespace creep {

template <typename T>
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

/// One bias-corrected Adam update applied in place to `params`. Moments are
/// created on the first call.
template <typename T>
void adam_step(AdamState<T>& state, std::span<Tensor<T>> params, std::span<const Tensor<T>> grads);

/// Rescales all gradients by max_norm / norm when the global L2 norm exceeds
/// max_norm. Returns the norm before clipping.
template <typename T>
double clip_grad_norm(std::span<Tensor<T>> grads, double max_norm);

template <typename T>
double global_norm(std::span<const Tensor<T>> grads);

/// Reduce-on-plateau on a monitored loss. A strictly lower loss resets the
/// counter; once the counter exceeds `patience` the rate is multiplied by
/// `factor` (not below `min_lr`) and the counter restarts.
class PlateauScheduler {
 public:
  PlateauScheduler(double factor = 0.5, std::size_t patience = 10, double min_lr = 0.0)
      : factor_(factor), patience_(patience), min_lr_(min_lr) {}

  double step(double loss, double lr);

  std::optional<double> best() const noexcept { return best_; }
  std::size_t counter() const noexcept { return counter_; }

 private:
  double factor_;
  std::size_t patience_;
  double min_lr_;
  std::optional<double> best_;
  std::size_t counter_ = 0;
};

struct RegressionMetrics {
  double rmse = 0.0;
  double r2 = 0.0;
  double mae = 0.0;
};

/// Metrics on values already in original units. DegenerateVariance when the
/// truth has zero spread.
RegressionMetrics regression_metrics(std::span<const double> predicted, std::span<const double> truth);

/// Inverse-scales both arrays, undoes the log transform, then scores.
RegressionMetrics compute_metrics(std::span<const double> pred_scaled, std::span<const double> target_scaled,
                                  const MinMaxScaler& target_scaler);

struct TrainingConfig {
  ModelConfig model;
  std::size_t epochs = 100;
  double lr = 1e-3;
  double beta = 1.0;
  std::optional<double> clip_norm;
  bool use_scheduler = false;
  double scheduler_factor = 0.5;
  std::size_t scheduler_patience = 10;
  std::size_t batch_size = 4;
  std::uint64_t seed = 42;
  bool record_timing = false;

  /// Per-model defaults: VAE gets lr 0.01, clipping at 1.0 and the plateau
  /// scheduler; the others lr 0.001 with neither.
  static TrainingConfig defaults(ModelKind kind);
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  RegressionMetrics train;
  RegressionMetrics val;
  double lr = 0.0;
  std::optional<double> epoch_seconds;
};

using History = std::vector<EpochMetrics>;

void write_history_csv(const History& history, std::ostream& out);
void write_history_csv(const History& history, const std::filesystem::path& destination);

/// Everything needed to rebuild a trained model and map raw inputs to it.
struct ModelCheckpoint {
  TrainingConfig config;
  NamedParams<float> parameters;
  std::array<MinMaxScaler, kFeatureCount> feature_scalers{};
  MinMaxScaler target_scaler{};
  UnitConvention units = UnitConvention::PaHours;
  std::vector<SequenceKey> validation_keys;
  std::size_t sequence_length = 0;
  std::size_t best_epoch = 0;
  double best_train_r2 = 0.0;

  ModelKind kind() const noexcept { return config.model.kind; }
};

/// Builds a model from the checkpoint's configuration and copies its weights.
std::unique_ptr<Model<float>> instantiate(const ModelCheckpoint& checkpoint);

/// Index (into history) of the strictly greatest train R²; first wins ties.
std::size_t best_epoch_index(const History& history);

struct TrainResult {
  ModelCheckpoint checkpoint;
  History history;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Seeded minibatch training. Throws EmptyInput when there is no training
/// data and NonFiniteLoss (naming the epoch and batch) on a NaN or inf loss.
TrainResult train_model(const PreparedData& data, const TrainingConfig& config, const EpochCallback& on_epoch = {});

struct EvaluationResult {
  RegressionMetrics train;
  RegressionMetrics val;
};

/// Eval-mode predictions for every sequence in `set`, flattened (N * L).
std::vector<double> predict_set(const Model<float>& model, const SequenceSet& set);

/// ArchitectureMismatch when `data` was not prepared with the checkpoint's
/// scalers or feature layout.
EvaluationResult evaluate(const ModelCheckpoint& checkpoint, const PreparedData& data);

/// The sequences at `indices` as (B, L, 3) features and (B, L, 1) targets.
Tensor<float> batch_features(const SequenceSet& set, std::span<const std::size_t> indices);
Tensor<float> batch_targets(const SequenceSet& set, std::span<const std::size_t> indices);

}  // namespace creep
