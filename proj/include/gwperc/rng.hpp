#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace gwperc {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

/// Order-sensitive combination of two words into one.
constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) noexcept {
    return mix64(a ^ mix64(b + 0x9e3779b97f4a7c15ULL));
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b, std::uint64_t c) noexcept {
    return hash_combine(hash_combine(a, b), c);
}

// Domain-separation tags. Every stream is derived from the master seed
// through one of these, so tree, percolation, IIC and bootstrap randomness
// never share a key.
namespace domain {
inline constexpr std::uint64_t tree = 0x7472656500000001ULL;
inline constexpr std::uint64_t percolation = 0x7065726300000002ULL;
inline constexpr std::uint64_t annealed = 0x616e6e6c00000003ULL;
inline constexpr std::uint64_t iic = 0x6969630000000004ULL;
inline constexpr std::uint64_t csbp = 0x6373627000000005ULL;
inline constexpr std::uint64_t bootstrap = 0x626f6f7400000006ULL;
inline constexpr std::uint64_t sampling = 0x73616d7000000007ULL;
}  // namespace domain

/// Counter-based random stream. Output i is a keyed hash of the counter:
///   x_i = mix64(k2 ^ mix64(k1 + i * gamma)),
/// where (k1, k2) are derived from (key, index). Like SplitMix64 the stream
/// has no sequential state beyond the counter, so any stream is reproducible
/// in isolation and streams with distinct (key, index) are independent
/// hash families. Satisfies UniformRandomBitGenerator.
class RandomStream {
public:
    using result_type = std::uint64_t;

    RandomStream(std::uint64_t key, std::uint64_t index) noexcept
        : k1_(hash_combine(key, index, 0x6b31)), k2_(hash_combine(key, index, 0x6b32)) {}

    /// Stream `index` of the family derived from (master_seed, domain tag).
    static RandomStream derive(std::uint64_t master_seed, std::uint64_t tag,
                               std::uint64_t index) noexcept {
        return RandomStream(hash_combine(master_seed, tag), index);
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept { return next_u64(); }

    std::uint64_t next_u64() noexcept {
        return mix64(k2_ ^ mix64(k1_ + (counter_++) * 0x9e3779b97f4a7c15ULL));
    }

    std::uint32_t next_u32() noexcept {
        if (half_available_) {
            half_available_ = false;
            return static_cast<std::uint32_t>(half_ >> 32);
        }
        half_ = next_u64();
        half_available_ = true;
        return static_cast<std::uint32_t>(half_);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1].
    double uniform_pos() noexcept {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    std::uint64_t draws() const noexcept { return counter_; }

private:
    std::uint64_t k1_;
    std::uint64_t k2_;
    std::uint64_t counter_ = 0;
    std::uint64_t half_ = 0;
    bool half_available_ = false;
};

/// Bernoulli(p) against a precomputed 64-bit threshold. One draw per flip
/// and no data-dependent branch, so it can sit in tight loops.
class Coin {
public:
    explicit Coin(double p) noexcept
        : threshold_(p >= 1.0 ? 0 : p <= 0.0 ? 0 : static_cast<std::uint64_t>(std::ldexp(p, 64))),
          always_(p >= 1.0) {}

    bool flip(RandomStream& rng) const noexcept { return (rng.next_u64() < threshold_) | always_; }

private:
    std::uint64_t threshold_;
    bool always_;
};

}  // namespace gwperc
