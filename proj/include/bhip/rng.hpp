#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace bhip {

/// SplitMix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seeded random stream.
///
/// Streams are split by key rather than by consuming draws, so a child
/// stream for (replicate 3, environment 1) is the same no matter how many
/// siblings were created before it or on which thread.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }

  Rng stream(std::uint64_t key) const { return Rng(mix64(seed_ ^ mix64(key + 0x632BE59BD9B4E019ULL))); }

  Rng stream(std::initializer_list<std::uint64_t> keys) const {
    Rng r = *this;
    for (auto k : keys) r = r.stream(k);
    return r;
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  long poisson(double rate) { return std::poisson_distribution<long>(rate)(engine_); }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace bhip
