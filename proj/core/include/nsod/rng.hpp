#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace nsod {

/// SplitMix64 step. Used both as a standalone generator and to derive
/// stream seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Deterministic seed derivation: one master seed plus a salt (stage or
/// purpose name) plus an index yields an independent stream. Splitting is
/// what makes per-image generation order-independent.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view salt,
                                 std::uint64_t index = 0) {
  std::uint64_t s = seed ^ (fnv1a64(salt) + 0x9e3779b97f4a7c15ULL * (index + 1));
  splitmix64(s);
  return splitmix64(s);
}

/// Small deterministic PRNG with hand-rolled distributions. std::*
/// distributions are implementation-defined, which would break the
/// byte-identical-output contract across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // Warm up so trivially related seeds decorrelate.
    splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform real in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi], inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    // Multiply-shift bounded draw; bias is below 2^-64 for desk-scale spans.
    const unsigned __int128 m =
        static_cast<unsigned __int128>(next_u64()) * span;
    return lo + static_cast<std::int64_t>(m >> 64);
  }

  /// Box-Muller, one value per call (the pair's second half is discarded
  /// so call sequences stay position-independent).
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t state_;
};

}  // namespace nsod
