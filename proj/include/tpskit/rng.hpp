// Copyright (C) 2026 tpskit contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tps {

// splitmix64 finalizer. Used to derive decorrelated sub-seeds from
// (base seed, purpose/stage/trial index) pairs.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return mix64(base ^ mix64(index + 0x51ed2701a9c5b4d3ULL));
}

// Deterministic generator. The engine is std::mt19937_64 (fully specified
// by the standard); all value mappings are done by hand so streams are
// bit-reproducible across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1), both ends excluded.
    double uniform_open() {
        return (static_cast<double>(eng_() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Unbiased integer in [0, n) by rejection.
    int uniform_int(int n) {
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t r;
        do {
            r = eng_();
        } while (r >= limit);
        return static_cast<int>(r % bound);
    }

    // Standard normal via Box-Muller (two uniforms per draw, no caching).
    double normal() {
        const double u1 = uniform_open();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Standard Gumbel, g = -log(-log(u)) with u in (0, 1) exclusive.
    double gumbel() { return -std::log(-std::log(uniform_open())); }

private:
    std::mt19937_64 eng_;
};

}  // namespace tps
