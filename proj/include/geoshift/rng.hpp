#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

#include "geoshift/errors.hpp"

namespace geoshift {

/// Deterministic 64-bit generator. The raw stream is splitmix64 of the
/// seed, so identical seeds give bit-identical sequences on every
/// platform. Every stochastic choice in the pipeline flows through this
/// type; a run is fully determined by (config, seed).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  /// One splitmix64 output for a given state, without constructing an Rng.
  /// Also used to derive child seeds: child = Rng(mix(parent_draw ^ index)).
  static uint64_t mix(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  uint64_t next_raw() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1), 53 random mantissa bits.
  double uniform01() { return static_cast<double>(next_raw() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    if (!(lo <= hi)) throw config_error("uniform: lo > hi");
    return lo + uniform01() * (hi - lo);
  }

  /// Box-Muller on two consecutive uniforms; always consumes exactly two
  /// raw draws so stream usage is predictable.
  double normal(double mu, double sigma) {
    if (sigma < 0) throw config_error("normal: sigma < 0");
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));  // log(1-u1), never log(0)
    return mu + sigma * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// 1 with probability p, consuming one uniform.
  int bernoulli(double p) {
    if (p < 0 || p > 1) throw config_error("bernoulli: p outside [0,1]");
    return uniform01() < p ? 1 : 0;
  }

  /// Unbiased integer in [0, n) via rejection sampling.
  uint64_t int_below(uint64_t n) {
    if (n == 0) throw config_error("int_below: n must be >= 1");
    // Reject raw values >= largest multiple of n, so every residue is
    // equally likely. limit == 0 means n divides 2^64: accept everything.
    const uint64_t limit = 0 - ((UINT64_MAX % n + 1) % n);
    uint64_t x = next_raw();
    while (limit != 0 && x >= limit) x = next_raw();
    return x % n;
  }

 private:
  uint64_t state_;
};

inline Rng make_rng(uint64_t seed) { return Rng(seed); }

/// Fisher-Yates permutation driven by int_below.
template <typename T>
void shuffle(Rng& rng, std::vector<T>& items) {
  if (items.size() < 2) return;
  for (size_t i = items.size() - 1; i >= 1; --i) {
    const size_t j = static_cast<size_t>(rng.int_below(i + 1));
    std::swap(items[i], items[j]);
  }
}

/// Derives `count` child generators from one parent draw. Children are
/// independent of the order they are later consumed in, so parallel work
/// seeded this way reproduces the sequential result bit-for-bit.
inline std::vector<Rng> split_rng(Rng& parent, size_t count) {
  const uint64_t base = parent.next_raw();
  std::vector<Rng> children;
  children.reserve(count);
  for (size_t i = 0; i < count; ++i)
    children.emplace_back(Rng::mix(base ^ static_cast<uint64_t>(i)));
  return children;
}

}  // namespace geoshift
