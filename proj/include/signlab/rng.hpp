#pragma once

#include <cstdint>
#include <random>

namespace signlab {

/// SplitMix64 finalizer. Used to spread weak seeds and to derive independent
/// per-trial stream seeds from a single base seed.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Deterministic seed for substream `stream`rooted at `base`. Distinct
/// streams never share state, so trials may run concurrently.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(splitmix64(base) ^ (0x9E3779B97F4A7C15ull * (stream + 1)));
}

/// Seeded random stream owned by exactly one run or probe at a time.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  /// Uniform draw in [0, 1).
  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }

  /// Standard normal draw.
  double normal() { return normal_(engine_); }

  std::uint64_t next_u64() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace signlab
