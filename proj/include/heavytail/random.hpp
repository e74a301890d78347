#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace heavytail {

/// SplitMix64 finalizer; used only to hash stream keys, never as a generator.
[[nodiscard]] constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// A single random stream backed by a 64-bit Mersenne twister.
///
/// Streams are never shared between threads. Independent sub-streams are derived
/// deterministically from a master seed and a path of integer indices, so a cell
/// of an experiment draws the same numbers no matter which worker runs it.
class RandomStream {
public:
  explicit RandomStream(std::uint64_t seed) { reseed(seed, {}); }

  RandomStream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) { reseed(seed, path); }

  /// Sub-stream of this stream's key extended by `path`.
  [[nodiscard]] RandomStream derive(std::initializer_list<std::uint64_t> path) const {
    return RandomStream(key_, path);
  }

  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform variate on the open interval (0, 1): 53 random bits plus half an ulp.
  double uniform() {
    constexpr double scale = 1.0 / 9007199254740992.0;  // 2^-53
    return (static_cast<double>(engine_() >> 11) + 0.5) * scale;
  }

private:
  void reseed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t k = splitmix64(seed);
    for (std::uint64_t p : path) {
      k = splitmix64(k ^ splitmix64(p + 0x632BE59BD9B4E019ULL));
    }
    key_ = k;
    std::seed_seq seq{static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32),
                      static_cast<std::uint32_t>(splitmix64(k)), static_cast<std::uint32_t>(splitmix64(k) >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t key_ = 0;
  std::mt19937_64 engine_;
};

}  // namespace heavytail
