/// \file rng.hpp
/// \brief Deterministic, splittable random streams.
///
/// SplitMix64 drives everything: it is tiny, passes BigCrush, and makes
/// substreams trivial — hashing (seed, tag) yields an independent stream,
/// so per-curve and per-component draws do not depend on evaluation order
/// or thread count.  Gaussians come from Box-Muller on the raw uniforms.
#pragma once

#include <cmath>
#include <cstdint>

namespace fpcov {
namespace rng {

struct SplitMix64 {
  std::uint64_t state = 0;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform on (0, 1]: 53 random bits, shifted away from zero so that
  /// log(u) below is always finite.
  double uniform() {
    return (static_cast<double>(next() >> 11) + 1.0) * 0x1.0p-53;
  }
};

/// Derive an independent stream seed for (seed, tag).
inline std::uint64_t substream(std::uint64_t seed, std::uint64_t tag) {
  SplitMix64 s(seed ^ (tag * 0x9E3779B97F4A7C15ull + 0x632BE59BD9B4E019ull));
  s.next();
  return s.next();
}

/// Gaussian stream; Box-Muller with the usual one-value cache.
struct GaussianStream {
  SplitMix64 sm;
  bool cached = false;
  double cache = 0.0;

  explicit GaussianStream(std::uint64_t seed) : sm(seed) {}

  double next() {
    if (cached) {
      cached = false;
      return cache;
    }
    const double u1 = sm.uniform();
    const double u2 = sm.uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    cache = r * std::sin(kTwoPi * u2);
    cached = true;
    return r * std::cos(kTwoPi * u2);
  }
};

}  // namespace rng
}  // namespace fpcov
