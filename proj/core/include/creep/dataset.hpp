#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "creep/material.hpp"

namespace creep {

struct RawRecord {
  double timestamp_h = 0.0;
  double temperature_c = 0.0;
  double stress_mpa = 0.0;
  double strain = 0.0;
};

struct SequenceKey {
  double temperature_c = 0.0;
  double stress_mpa = 0.0;

  friend bool operator==(const SequenceKey&, const SequenceKey&) = default;
};

inline constexpr std::size_t kFeatureCount = 3;
enum Feature : std::size_t { kTemperature = 0, kStress = 1, kTime = 2 };

/// N sequences of length L. Features are stored row-major as (N, L, 3) in
/// [temperature, stress, time] order, targets as (N, L, 1).
struct SequenceSet {
  std::vector<SequenceKey> keys;
  std::size_t length = 0;
  std::vector<double> features;
  std::vector<double> targets;

  std::size_t size() const noexcept { return keys.size(); }
  double feature(std::size_t seq, std::size_t step, std::size_t f) const {
    return features[(seq * length + step) * kFeatureCount + f];
  }
  double target(std::size_t seq, std::size_t step) const { return targets[seq * length + step]; }
};

/// Min-max map to [0, 1]. A degenerate scaler (max == min) maps
/// everything to 0 and inverts to min.
struct MinMaxScaler {
  double min_val = 0.0;
  double max_val = 1.0;

  bool degenerate() const noexcept { return !(max_val > min_val); }
  double transform(double x) const noexcept;
  double inverse(double scaled) const noexcept;
};

struct SplitSpec {
  std::vector<SequenceKey> validation_keys;

  /// (700,75), (800,100), (900,125), (1000,50).
  static SplitSpec default_holdout();
};

struct PreparedData {
  SequenceSet train;
  SequenceSet val;
  std::array<MinMaxScaler, kFeatureCount> feature_scalers{};
  MinMaxScaler target_scaler{};
  UnitConvention units = UnitConvention::PaHours;
  SplitSpec split;
  std::optional<std::size_t> subsample_to;
};

/// ln(1 + strain); DomainError for strain <= -1.
double log_transform(double strain);
double inverse_log_transform(double log_strain);

/// Flattens curves into rows, the same rows export_curves_csv writes.
std::vector<RawRecord> records_from_curves(const std::vector<CreepCurve>& curves);

std::vector<RawRecord> read_records_csv(std::istream& in);
std::vector<RawRecord> read_records_csv(const std::filesystem::path& source);

SequenceSet group_sequences(const std::vector<RawRecord>& records);

/// Uniform index selection keeping the first and last step.
std::vector<std::size_t> subsample_indices(std::size_t length, std::size_t target);
SequenceSet subsample(const SequenceSet& set, std::size_t target);

struct SplitResult {
  SequenceSet train;
  SequenceSet val;
};
SplitResult fixed_split(const SequenceSet& set, const SplitSpec& spec);

MinMaxScaler fit_scaler(const std::vector<double>& values);

std::vector<double> feature_column(const SequenceSet& set, std::size_t feature);

/// Applies the scalers to a copy of `set`.
SequenceSet scale_set(const SequenceSet& set, const std::array<MinMaxScaler, kFeatureCount>& features,
                      const MinMaxScaler& target);

PreparedData prepare(const std::vector<RawRecord>& records, const SplitSpec& spec,
                     std::optional<std::size_t> subsample_to = std::nullopt,
                     UnitConvention units = UnitConvention::PaHours);

/// Directory layout: train.csv, val.csv, scalers.json.
void write_prepared(const PreparedData& data, const std::filesystem::path& directory);
PreparedData read_prepared(const std::filesystem::path& directory);

}  // namespace creep
