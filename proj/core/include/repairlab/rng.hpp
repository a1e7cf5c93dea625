#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string_view>
#include <utility>
#include <vector>

namespace repairlab {

/// SplitMix64 finalizer. Bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based generator: every draw is a pure function of (seed, stream, index),
/// so results do not depend on evaluation order.
class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t seed) noexcept : seed_(seed) {}

    constexpr std::uint64_t bits(std::uint64_t stream, std::uint64_t index) const noexcept {
        return mix64(mix64(seed_ ^ mix64(stream)) + index);
    }

    /// Uniform in [0,1) with 53 bits of resolution.
    constexpr double uniform(std::uint64_t stream, std::uint64_t index) const noexcept {
        return static_cast<double>(bits(stream, index) >> 11) * 0x1.0p-53;
    }

    constexpr std::uint64_t seed() const noexcept { return seed_; }

private:
    std::uint64_t seed_;
};

/// FNV-1a over a string, used to key named stages.
constexpr std::uint64_t fnv1a(std::string_view text) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Per-stage seed derived from the global seed and the stage name.
constexpr std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view stage) noexcept {
    return mix64(global_seed ^ fnv1a(stage));
}

/// Fisher-Yates permutation of 0..n-1 drawn from (seed, stream).
inline std::vector<long> permutation(std::size_t n, std::uint64_t seed, std::uint64_t stream) {
    std::vector<long> idx(n);
    std::iota(idx.begin(), idx.end(), 0L);
    const CounterRng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.bits(stream, i) % i]);
    return idx;
}

}  // namespace repairlab
