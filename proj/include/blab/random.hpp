#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

namespace blab {

/// SplitMix64 finalizer. Used for seed derivation and counter-based streams.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Roles keep the streams of one replicate independent of each other.
enum class StreamRole : std::uint64_t {
    EnvMatrix = 1,
    EnvNoise = 2,
    Policy = 3,
    Subsample = 4,
    MonteCarlo = 5,
};

/// Derives a child seed from a parent seed and a path of integers.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept
{
    std::uint64_t s = mix64(master);
    for (auto p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
    return s;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t replicate, StreamRole role,
                                 std::uint64_t id = 0) noexcept
{
    return derive_seed(master, {replicate, static_cast<std::uint64_t>(role), id});
}

/// Small-state engine so a fresh generator per (seed, counter) is cheap.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

using Rng = std::mt19937_64;

} // namespace blab
