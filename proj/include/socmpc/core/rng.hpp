#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace socmpc {

namespace detail {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

/// Derives independent named sub-seeds from one root seed, so each subsystem
/// (scenario, spawn, model-init, batch-shuffle, ...) is reproducible on its own.
inline uint64_t derive_seed(uint64_t root, std::string_view stream, uint64_t index = 0) {
    uint64_t h = detail::splitmix64(root ^ detail::fnv1a(stream));
    return detail::splitmix64(h ^ detail::splitmix64(index));
}

inline std::mt19937_64 make_rng(uint64_t root, std::string_view stream, uint64_t index = 0) {
    return std::mt19937_64(derive_seed(root, stream, index));
}

}  // namespace socmpc
