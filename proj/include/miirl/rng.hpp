#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>

namespace miirl {

/// Deterministic random source. Wraps std::mt19937_64 but performs all
/// mappings (uniform reals, bounded ints, categorical draws) explicitly so
/// that streams are bit-identical across platforms and standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix(seed)) {}

  /// Uniform double in [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<int>(x % un);
  }

  /// Categorical draw from an (assumed normalized) probability vector.
  /// Cumulative-sum walk; any trailing round-off mass goes to the last
  /// nonzero entry.
  int categorical(std::span<const double> probs) {
    if (probs.empty()) throw std::invalid_argument("categorical: empty");
    const double u = uniform();
    double cum = 0.0;
    int last_nonzero = -1;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] > 0.0) last_nonzero = static_cast<int>(i);
      cum += probs[i];
      if (u < cum) return static_cast<int>(i);
    }
    if (last_nonzero < 0)
      throw std::invalid_argument("categorical: all-zero probabilities");
    return last_nonzero;
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Fresh seed for a named substream; used to hand child components their
  /// own independent generators.
  std::uint64_t fork_seed() { return mix(engine_()); }

  /// Stateless stream derivation (splitmix64 finalizer).
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    return mix(seed + 0x9e3779b97f4a7c15ULL * (stream + 1));
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
};

}  // namespace miirl
