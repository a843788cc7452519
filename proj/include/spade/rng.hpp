#pragma once

#include <cstdint>
#include <random>

namespace spade {

/// SplitMix64 finalizer; used to derive stream keys, not as a generator.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ mix64(b + 0x632be59bd9b4e019ULL));
}

/// Deterministic random stream identified by (master seed, stream id).
///
/// Identical (seed, id) pairs reproduce identical draw sequences. Child
/// streams are derived by hashing the parent key with a child id, so a tree
/// of streams (run -> bin -> leaf) is stable regardless of the order in
/// which workers consume them.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : seed_(seed), stream_(stream), engine_(make_engine(seed, stream)) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_; }

  RngStream substream(std::uint64_t child) const {
    return RngStream(seed_, hash_combine(stream_, child));
  }

  static constexpr result_type min() noexcept { return std::mt19937_64::min(); }
  static constexpr result_type max() noexcept { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  /// Uniform integer in [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }

  double normal() { return normal_(engine_); }

 private:
  static std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
    const std::uint64_t k0 = hash_combine(seed, stream);
    const std::uint64_t k1 = mix64(k0);
    std::seed_seq seq{static_cast<std::uint32_t>(k0), static_cast<std::uint32_t>(k0 >> 32),
                      static_cast<std::uint32_t>(k1), static_cast<std::uint32_t>(k1 >> 32)};
    return std::mt19937_64(seq);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace spade
