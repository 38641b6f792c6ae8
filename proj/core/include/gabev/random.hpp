#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace gabev::rng {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Counter-based hash of a key tuple: h = mix(seed), then h = mix(h ^ k) per key.
constexpr std::uint64_t hash_key(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept {
    std::uint64_t h = mix64(seed);
    for (std::uint64_t k : keys) {
        h = mix64(h ^ k);
    }
    return h;
}

// Top 24 bits -> uniform [0, 1), exactly representable as float.
constexpr float unit_float(std::uint64_t h) noexcept {
    return static_cast<float>(h >> 40) * (1.0f / 16777216.0f);
}

// Uniform [-1, 1) float.
constexpr float symmetric_float(std::uint64_t h) noexcept {
    return 2.0f * unit_float(h) - 1.0f;
}

// Top 53 bits -> uniform [0, 1) double.
constexpr double unit_double(std::uint64_t h) noexcept {
    return static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
}

// Standard normal draw for a key tuple (Box-Muller on two derived uniforms).
inline double standard_normal(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept {
    const std::uint64_t h = hash_key(seed, keys);
    const double u1 = 1.0 - unit_double(mix64(h ^ 0x1ULL));  // (0, 1]
    const double u2 = unit_double(mix64(h ^ 0x2ULL));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace gabev::rng
