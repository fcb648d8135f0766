#pragma once

#include <cstdint>
#include <vector>

namespace dynmask::rng {

// SplitMix64 (Steele, Lea & Flood). The output at step i is a pure function
// of (initial state, i), which makes streams splittable and replayable.
// Every random draw in the project flows through this generator; nothing
// reads the wall clock, so a run is fully determined by the config seed.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in (0, 1].
  double uniform01() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller. std::normal_distribution is
  /// implementation-defined, so it is not used anywhere.
  double gaussian();

 private:
  std::uint64_t state_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

/// Derives an independent stream key from a base seed and a stream index.
std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

/// n iid zero-mean Gaussian samples with the given variance.
std::vector<double> white_noise(std::uint64_t seed, std::size_t n, double variance);

// Stream tags. Keeping them in one place guarantees that, e.g., the noise
// realization of the benign phase never collides with the excitation stream.
namespace streams {
inline constexpr std::uint64_t kExcitation = 1;
inline constexpr std::uint64_t kBenignNoise = 2;
inline constexpr std::uint64_t kAttackNoise = 3;
inline constexpr std::uint64_t kCalibration = 4;
inline constexpr std::uint64_t kReplicateBase = 1000;
inline constexpr std::uint64_t kSweepValueBase = 5000;
}  // namespace streams

}  // namespace dynmask::rng
