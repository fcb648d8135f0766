#include "dynmask/rng.hpp"

#include <cmath>

namespace dynmask::rng {

double SplitMix64::gaussian() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_;
  }
  const double u1 = uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * 3.14159265358979323846 * u2;
  cached_ = r * std::sin(theta);
  has_cached_ = true;
  return r * std::cos(theta);
}

std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
  SplitMix64 g(seed ^ (0xD1B54A32D192ED03ULL * (stream + 1)));
  return g.next_u64();
}

std::vector<double> white_noise(std::uint64_t seed, std::size_t n, double variance) {
  std::vector<double> out(n, 0.0);
  if (variance <= 0.0) return out;
  SplitMix64 g(seed);
  const double sigma = std::sqrt(variance);
  for (std::size_t i = 0; i < n; ++i) out[i] = sigma * g.gaussian();
  return out;
}

}  // namespace dynmask::rng
