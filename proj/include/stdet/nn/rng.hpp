// SPDX-License-Identifier: Apache-2.0
/**
 * @file   rng.hpp
 * @brief  SplitMix64 generator. Used wherever a result must be reproducible
 *         across platforms and standard libraries (weight init, shuffles,
 *         synthetic data), which rules out std::*_distribution.
 */
#ifndef STDET_NN_RNG_HPP_
#define STDET_NN_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace stdet::nn {

class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Lemire-style rejection keeps the result unbiased.
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t v;
    do {
      v = (*this)();
    } while (v >= limit);
    return v % n;
  }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0)
      u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Derives an independent stream, e.g. one per fold or per track.
  SplitMix64 fork(std::uint64_t salt) {
    return SplitMix64((*this)() ^ (salt * 0xD1B54A32D192ED03ULL));
  }

 private:
  std::uint64_t state_;
};

/// Fisher-Yates with SplitMix64.
template <class T> void shuffle(std::span<T> items, SplitMix64 &rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace stdet::nn

#endif  // STDET_NN_RNG_HPP_
