#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "bcg/linalg.hpp"

namespace bcg {

/// Seeded stream of standard normal variates.
///
/// Each (seed, stream) pair seeds its own 64-bit Mersenne twister through a
/// SplitMix64 mix, so parallel workers use disjoint streams indexed by problem
/// number. Normals come from the Box-Muller transform written out here rather
/// than std::normal_distribution, whose algorithm differs between standard
/// libraries.
class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), engine_(mix(seed, stream)) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  /// A fresh, independent source for sub-stream `index` of this seed.
  RandomSource substream(std::uint64_t index) const { return RandomSource(seed_, index); }

  /// Uniform variate in the open interval (0, 1).
  double uniform() {
    // 53 random mantissa bits, shifted off zero.
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  Vector normal_vector(Index n) {
    Vector z(n);
    for (Index i = 0; i < n; ++i) z(i) = normal();
    return z;
  }

  Matrix normal_matrix(Index rows, Index cols) {
    Matrix z(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) z(i, j) = normal();
    return z;
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
    return splitmix(splitmix(seed) ^ splitmix(stream + 0x632BE59BD9B4E019ULL));
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace bcg
