#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace multimed::rng {

/// SplitMix64 finalizer. Used to mix seeds and sub-seed path components.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Hierarchical sub-seed: derive(seed, {stage, node, replicate}) gives an
/// independent stream for every path. Order of components matters.
std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept;

// Tags for the first path component so unrelated consumers never collide.
namespace tag {
inline constexpr std::uint64_t coefficients = 0x636f6566;   // "coef"
inline constexpr std::uint64_t calibration = 0x63616c69;    // "cali"
inline constexpr std::uint64_t simulation = 0x73696d75;     // "simu"
inline constexpr std::uint64_t oracle = 0x6f726163;         // "orac"
inline constexpr std::uint64_t folds = 0x666f6c64;          // "fold"
inline constexpr std::uint64_t bootstrap = 0x626f6f74;      // "boot"
}  // namespace tag

/// A 64-bit Mersenne Twister stream with portable transforms. The engine is
/// fully specified by the standard; distributions are implemented here
/// because the std:: ones are not reproducible across standard libraries.
class Stream {
public:
    explicit Stream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform on [0, 1) with 53 bits of precision.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal via the Marsaglia polar method.
    double normal();

    /// Uniform integer in [0, n), unbiased (rejection sampling). n > 0.
    std::uint64_t below(std::uint64_t n);

    /// Fisher-Yates shuffle of [0, n).
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace multimed::rng
