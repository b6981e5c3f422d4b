#include "creep/latency.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "creep/error.hpp"

namespace creep {

Tensor<float> synthetic_sequence(std::size_t length) {
  if (length == 0) throw Error(ErrorKind::InvalidArgument, "sequence length must be positive");
  std::vector<float> values(length * 3);
  for (std::size_t i = 0; i < length; ++i) {
    values[i * 3 + 0] = 0.5f;
    values[i * 3 + 1] = 0.5f;
    values[i * 3 + 2] = length == 1 ? 0.0f : static_cast<float>(static_cast<double>(i) / static_cast<double>(length - 1));
  }
  return Tensor<float>({1, length, 3}, std::move(values));
}

LatencyStats benchmark_latency(const Model<float>& model, std::size_t length, std::size_t reps, std::size_t warmup) {
  if (reps < 3) throw Error(ErrorKind::InvalidArgument, "latency needs at least 3 timed repetitions");
  if (warmup < 1) throw Error(ErrorKind::InvalidArgument, "latency needs at least 1 warmup pass");
  const auto x = synthetic_sequence(length);
  for (std::size_t i = 0; i < warmup; ++i) (void)model.predict(x);

  LatencyStats stats;
  stats.length = length;
  stats.warmup = warmup;
  stats.per_rep_ms.reserve(reps);
  for (std::size_t i = 0; i < reps; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const auto y = model.predict(x);
    const auto stop = std::chrono::steady_clock::now();
    if (y.numel() != length) throw Error(ErrorKind::ShapeMismatch, "unexpected prediction size");
    stats.per_rep_ms.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  const double n = static_cast<double>(reps);
  stats.mean_ms = std::accumulate(stats.per_rep_ms.begin(), stats.per_rep_ms.end(), 0.0) / n;
  double ss = 0.0;
  for (const double v : stats.per_rep_ms) ss += (v - stats.mean_ms) * (v - stats.mean_ms);
  stats.std_ms = std::sqrt(ss / (n - 1.0));
  const auto [lo, hi] = std::minmax_element(stats.per_rep_ms.begin(), stats.per_rep_ms.end());
  stats.min_ms = *lo;
  stats.max_ms = *hi;
  return stats;
}

HostInfo host_info() {
  HostInfo info;
  info.logical_cores = std::thread::hardware_concurrency();
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) {
        info.cpu_model = line.substr(line.find_first_not_of(' ', colon + 1));
      }
      break;
    }
  }
  if (info.cpu_model.empty()) info.cpu_model = "unknown cpu";
#if defined(__clang__)
  info.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  info.compiler = "gcc " __VERSION__;
#else
  info.compiler = "unknown";
#endif
#ifdef NDEBUG
  info.build_type = "release";
#else
  info.build_type = "debug";
#endif
  return info;
}

std::string describe(const HostInfo& host) {
  return host.cpu_model + " (" + std::to_string(host.logical_cores) + " logical cores)";
}

}  // namespace creep
