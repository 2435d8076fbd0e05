#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace fbsde {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based generator: output n of stream (seed, stream) is mix64(key + n * golden).
/// Streams for distinct (seed, stream) pairs are independent of scheduling.
class StreamRng {
 public:
  using result_type = std::uint64_t;

  StreamRng(std::uint64_t seed, std::uint64_t stream) : key_(mix64(mix64(seed) ^ mix64(~stream))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    ++counter_;
    return mix64(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Standard normal draws from one stream.
class GaussianStream {
 public:
  GaussianStream(std::uint64_t seed, std::uint64_t stream) : rng_(seed, stream) {}
  double operator()() { return dist_(rng_); }
  StreamRng& engine() { return rng_; }

 private:
  StreamRng rng_;
  std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace fbsde
