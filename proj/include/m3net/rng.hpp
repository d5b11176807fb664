#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace m3net {

// Counter-based splittable generator (splitmix64). Streams are keyed, so the
// values drawn for one consumer never depend on what other consumers drew.
struct SplitMix64 {
    std::uint64_t state;

    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_real() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double next_real(double lo, double hi) { return lo + (hi - lo) * next_real(); }
};

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Stream keyed by (seed, name). Two parameters with different names draw from
// unrelated streams, so initialization does not depend on creation order.
inline SplitMix64 keyed_stream(std::uint64_t seed, std::string_view name) {
    std::uint64_t key = fnv1a64(name);
    key ^= seed + 0x9e3779b97f4a7c15ull + (key << 6) + (key >> 2);
    return SplitMix64(key);
}

// Deterministic permutation of [0, n) for a given (seed, epoch).
inline std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed,
                                                 std::uint64_t epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    SplitMix64 rng(seed ^ (0x517cc1b727220a95ull * (epoch + 1)));
    // Fisher-Yates
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

}  // namespace m3net
