#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace dva {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent child seed from (seed, stream, index).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) + index);
}

// Named streams so callers never reuse one RNG for two purposes.
namespace streams {
inline constexpr std::uint64_t kInit = 0x1001;
inline constexpr std::uint64_t kEnv = 0x2002;
inline constexpr std::uint64_t kAction = 0x3003;
inline constexpr std::uint64_t kDrop = 0x4004;
inline constexpr std::uint64_t kSaliency = 0x5005;
}  // namespace streams

/// mt19937_64 with portable distribution helpers (the std:: distributions are
/// implementation-defined, which would break bit-reproducibility).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Samples an index from a probability vector by inverse CDF.
  template <class T>
  std::size_t categorical(std::span<const T> probs) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += static_cast<double>(probs[i]);
      if (u < acc) return i;
    }
    // Rounding left u above the final cumulative sum.
    for (std::size_t i = probs.size(); i-- > 0;) {
      if (probs[i] > T{0}) return i;
    }
    return probs.size() - 1;
  }

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dva
