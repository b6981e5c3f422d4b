#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "creep/models.hpp"

namespace creep {

struct LatencyStats {
  std::size_t length = 0;
  std::size_t warmup = 0;
  double mean_ms = 0.0;
  /// Sample standard deviation (n - 1).
  double std_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  std::vector<double> per_rep_ms;
};

/// One scaled sequence of `length` steps: temperature and stress at 0.5, time
/// rising linearly from 0 to 1. Shape (1, length, 3).
Tensor<float> synthetic_sequence(std::size_t length);

/// Times `reps` eval-mode forward passes at batch 1 after `warmup` untimed
/// ones, on std::chrono::steady_clock. Needs reps >= 3 and warmup >= 1.
LatencyStats benchmark_latency(const Model<float>& model, std::size_t length, std::size_t reps, std::size_t warmup);

struct HostInfo {
  std::string cpu_model;
  unsigned logical_cores = 0;
  std::string compiler;
  std::string build_type;
};

HostInfo host_info();
/// "cpu_model (N logical cores)".
std::string describe(const HostInfo& host);

}  // namespace creep
