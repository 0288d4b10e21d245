#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace jointsel {

/// Counter-based generator: output n is a SplitMix64 finalisation of
/// key + n * golden-gamma, so a stream is fully described by (key, counter)
/// and produces the same sequence on every platform. Distributions are
/// implemented here rather than via <random>, whose distributions are not
/// portable across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t key) noexcept : key_(mix(key)) {}

  /// Named sub-stream of a seed ("kmeans", "strategy", "synthetic", ...).
  static Rng stream(std::uint64_t seed, std::string_view name) noexcept;

  /// Independent child stream, e.g. one per restart.
  Rng fork(std::uint64_t index) const noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, n); n must be > 0. Unbiased (Lemire's method).
  std::uint64_t uniform_index(std::uint64_t n) noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() noexcept;
  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept;

  std::uint64_t counter() const noexcept { return counter_; }

  static std::uint64_t mix(std::uint64_t z) noexcept;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

template <typename T>
void shuffle(std::vector<T>& values, Rng& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace jointsel
