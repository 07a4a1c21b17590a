#pragma once

#include <cstdint>

// Counter-based random number generator used everywhere randomness is needed.
//
// The algorithm is SplitMix64 (the Steele/Lea/Flood mix64 finalizer applied to
// an affine counter walk with the golden-ratio increment).  Output i of the
// stream with key k is
//
//     mix64(k + (i + 1) * 0x9E3779B97F4A7C15)
//
// which is a pure function of (key, i): draws can be evaluated in any order
// and from any shard, and results are identical on every platform with 64-bit
// unsigned arithmetic.

namespace nhmdp::rng {

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

// i-th output of the stream identified by key.
constexpr std::uint64_t at(std::uint64_t key, std::uint64_t i) {
    return mix64(key + (i + 1) * kGolden);
}

// Derives an independent stream key, e.g. one per simulated path.
constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    return mix64(mix64(seed + 1) ^ (stream * kGolden + 1));
}

// Uniform double in [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Stateful convenience wrapper around one stream.
class Stream {
  public:
    explicit Stream(std::uint64_t key) : key_(key) {}
    Stream(std::uint64_t seed, std::uint64_t stream) : key_(derive(seed, stream)) {}

    std::uint64_t next_u64() { return at(key_, counter_++); }
    double next_unit() { return to_unit(next_u64()); }
    double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }
    // Uniform integer in [0, n), n >= 1.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace nhmdp::rng
