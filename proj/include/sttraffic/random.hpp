#pragma once

#include <cstdint>
#include <random>

namespace sttraffic {

/// Sequential engine used for every sampled quantity that is consumed in order.
using Engine = std::mt19937_64;

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Child seed for an independent sub-stream of `seed`.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return mix64(mix64(seed) ^ mix64(stream + 0x632be59bd9b4e019ULL));
}

/// Counter-based uniform in [0, 1): a pure function of (key, counter).
constexpr double counter_uniform(std::uint64_t key, std::uint64_t counter) noexcept {
    const std::uint64_t bits = mix64(mix64(key) ^ (counter * 0xd1342543de82ef95ULL + 1));
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

inline Engine make_engine(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    return Engine(seq);
}

// Stream tags used with derive_seed so that different consumers of one run
// seed never share draws.
namespace stream {
inline constexpr std::uint64_t base_stations = 1;
inline constexpr std::uint64_t users = 2;
inline constexpr std::uint64_t rates = 3;
inline constexpr std::uint64_t arrivals = 4;
inline constexpr std::uint64_t scheduling = 5;
inline constexpr std::uint64_t fading = 6;
inline constexpr std::uint64_t probes = 7;
inline constexpr std::uint64_t service = 8;
}  // namespace stream

}  // namespace sttraffic
