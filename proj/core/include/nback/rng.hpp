#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace nback {

/// Stream purposes mixed into derived seeds so that task generation and
/// scripted-agent randomness never share a sequence.
enum class StreamPurpose : std::uint64_t {
  kTask = 0x7461736bULL,   // "task"
  kAgent = 0x6167656eULL,  // "agen"
  kRetry = 0x72657472ULL,  // "retr"
};

/// SplitMix64 finalizer. Used only for seed derivation, never as the
/// sampling engine itself.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives the seed of an independent stream from a root seed and a list of
/// integer coordinates. The scheme is
///
///   s0 = splitmix64(root ^ purpose)
///   s(i+1) = splitmix64(s(i) ^ splitmix64(coord[i] + i + 1))
///
/// Runs use the coordinates (n, block_index), so every (experiment seed, n,
/// block) triple owns a stream that does not depend on execution order.
constexpr std::uint64_t derive_stream_seed(
    std::uint64_t root, StreamPurpose purpose,
    std::initializer_list<std::uint64_t> coords) {
  std::uint64_t s = splitmix64(root ^ static_cast<std::uint64_t>(purpose));
  std::uint64_t i = 0;
  for (std::uint64_t c : coords) {
    ++i;
    s = splitmix64(s ^ splitmix64(c + i));
  }
  return s;
}

/// Portable random source: std::mt19937_64 has a bit-exact definition in the
/// standard, but the standard distributions do not, so bounded integers and
/// unit reals are drawn here by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t uniform_below(std::uint64_t bound) {
    // Rejection on the top of the range keeps the draw exactly uniform.
    const std::uint64_t limit = bound * (UINT64_MAX / bound);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % bound;
  }

  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(
                    uniform_below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nback
