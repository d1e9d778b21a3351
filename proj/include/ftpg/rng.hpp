#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace ftpg {

/// splitmix64 finaliser.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Order-sensitive hash of a word sequence; the derivation used for every
/// child seed in the simulator.
std::uint64_t hash64(std::initializer_list<std::uint64_t> words) noexcept;

/// FNV-1a of a short label, for naming seed streams.
std::uint64_t tag(std::string_view label) noexcept;

/// Seeded random stream. Only the engine's raw 64-bit output is used, so draws
/// are identical on every standard library (unlike std::*_distribution).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (one value per pair of uniforms).
  double gaussian();

  /// Uniform integer in [0, bound), rejection sampled.
  std::uint64_t below(std::uint64_t bound);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ftpg
