#pragma once

#include <cstdint>

namespace bdz {

/// Counter-based SplitMix64: draw i of stream `key` is mix(key + i * golden),
/// where mix is the SplitMix64 finalizer (Steele, Lea & Flood 2014). The
/// sequence depends only on (key, i), so seeds reproduce bit-for-bit on any
/// platform and in any language that implements the same two functions.
/// Derived distributions (uniform, normal, gamma) are implemented here
/// rather than taken from <random>, whose distributions are not portable.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(seed) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    ++counter_;
    return mix(key_ + counter_ * kGolden);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  /// Uniform on (0, 1).
  double uniform_open() {
    double u;
    do {
      u = uniform();
    } while (u == 0.0);
    return u;
  }
  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal by Box-Muller (one draw per call, two uniforms).
  double normal();
  /// Gamma(shape, 1) by Marsaglia-Tsang.
  double gamma(double shape);

  /// Independent child stream.
  CounterRng split(std::uint64_t stream) const { return CounterRng(mix(key_ ^ mix(stream + kGolden))); }

  std::uint64_t key() const { return key_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace bdz
