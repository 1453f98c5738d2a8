#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace pdmis {

/// Seedable random stream. Every stochastic operation in the library takes
/// one of these explicitly; there is no global generator.
///
/// Independent substreams are derived from a master seed and a list of
/// tags (run index, stage, ...) by hashing, so work units can be executed
/// in any order and still see the same numbers.
class RandomStream {
 public:
  using engine_type = std::mt19937_64;

  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  /// Substream for (seed, tags...). Distinct tag lists give unrelated streams.
  static RandomStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> tags);

  double normal() { return normal_(engine_); }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  /// Uniform index in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::uint64_t next_u64() { return engine_(); }

  engine_type& engine() { return engine_; }

 private:
  engine_type engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// SplitMix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x);

}  // namespace pdmis
