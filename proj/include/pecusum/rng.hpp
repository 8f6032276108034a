// =============================================================================
// Seed derivation and random-number plumbing.
//
// Reproducibility contract: every independent unit of work (replication, null
// draw, subject stream) gets its own engine seeded by mixing (master seed,
// stream id, unit index) through splitmix64. Results are then independent of
// how units are distributed across threads.
// =============================================================================
#pragma once

#include <cstdint>
#include <random>

namespace pecusum::rng {

// splitmix64 step: advances the state and returns a well-mixed 64-bit value.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d4a2c592f8b2dcULL;
    return z ^ (z >> 31);
}

// Mixes (seed, stream, index) into a single engine seed. Distinct argument
// triples give (for all practical purposes) non-colliding, decorrelated seeds.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t index) {
    std::uint64_t s = seed;
    std::uint64_t a = splitmix64(s);
    s ^= stream * 0x9e3779b97f4a7c15ULL;
    std::uint64_t b = splitmix64(s);
    s ^= index * 0xd1b54a32d192ed03ULL;
    std::uint64_t c = splitmix64(s);
    return a ^ (b >> 1) ^ (c << 1);
}

inline std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream,
                                   std::uint64_t index) {
    return std::mt19937_64(derive_seed(seed, stream, index));
}

// Fisher-Yates permutation of {0..n-1}. Hand-rolled so the result depends only
// on the engine's bit stream, not on library shuffle internals.
template <class Engine>
std::vector<int> permutation(int n, Engine& eng) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) {
        // Modulo bias is < 2^-57 for the n used here; irrelevant.
        const int j = static_cast<int>(eng() % static_cast<std::uint64_t>(i + 1));
        std::swap(p[i], p[j]);
    }
    return p;
}

}  // namespace pecusum::rng
