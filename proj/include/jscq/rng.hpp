#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace jscq {

/// Reproducible random stream keyed by (seed, stream index).
///
/// SplitMix64 mixes the pair into a 64-bit seed for std::mt19937_64. Uniform
/// doubles take the top 53 bits of one draw; normals use the Box-Muller
/// transform. The transforms are spelled out here rather than taken from
/// <random> distributions, whose outputs differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64() { return engine_(); }
  // [0, 1)
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Standard normal.
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace jscq
