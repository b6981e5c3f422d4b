#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

namespace creep {

/// Seeded generator used everywhere randomness enters (initialization,
/// shuffling, dropout masks, latent noise).
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Uniform doubles take the top 53 bits of one draw, so they lie in
/// [0, 1). Normals use the Box-Muller transform on two uniforms and return the
/// cosine branch first, caching the sine branch for the next call.
class SeededRng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64+box-muller";

  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  /// Number of raw 64-bit words consumed so far.
  std::uint64_t position() const noexcept { return position_; }

  std::uint64_t next_u64();
  /// [0, 1)
  double uniform();
  /// [lo, hi)
  double uniform(double lo, double hi);
  double standard_normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  /// Independent child stream; deterministic in (seed, stream).
  SeededRng fork(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::uint64_t position_ = 0;
  std::optional<double> spare_normal_;
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace creep
