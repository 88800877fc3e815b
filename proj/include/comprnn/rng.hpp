// SPDX-License-Identifier: Apache-2.0
/**
 * @file   rng.hpp
 * @brief  Portable deterministic random number generator.
 *
 * The generator is SplitMix64 (Steele, Lea & Flood 2014):
 *
 *     state += 0x9E3779B97F4A7C15
 *     z = state
 *     z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
 *     z = (z ^ (z >> 27)) * 0x94D049BB133111EB
 *     return z ^ (z >> 31)
 *
 * with the initial state equal to the seed. Only 64-bit unsigned integer
 * arithmetic is involved, so the stream is identical on every platform.
 *
 * Derived streams:
 *  - uniform01():      (next() >> 11) * 2^-53, a double in [0, 1).
 *  - uniform_below(n): rejection sampling on next() with threshold
 *                      (2^64 - n) mod n, then next() mod n.
 *  - fork(label):      a fresh Rng seeded with mix(seed ^ mix(fnv1a64(label))),
 *                      where mix is the SplitMix64 output finalizer. The child
 *                      depends only on (seed, label), never on how many values
 *                      the parent has already produced.
 *  - fork(n):          fork(decimal string of n).
 */
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace comprnn {

/// SplitMix64 output finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a over raw bytes.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

class Rng {
public:
  explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed), state_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix64(state_);
  }

  double uniform01() noexcept {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_below(std::uint64_t n) noexcept {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold)
        return r % n;
    }
  }

  bool bernoulli(double p) noexcept { return uniform01() < p; }

  Rng fork(std::string_view label) const noexcept {
    return Rng(mix64(seed_ ^ mix64(fnv1a64(label))));
  }

  Rng fork(std::uint64_t n) const { return fork(std::to_string(n)); }

  /// Fisher-Yates shuffle driven by uniform_below.
  template <class T> void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

} // namespace comprnn
