#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "obidet/errors.hpp"

namespace obidet {

// splitmix64 finalizer; used both to condition raw seeds and to derive
// independent streams from (seed, index) pairs.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return mix64(mix64(seed) ^ (index + 0x632be59bd9b4e019ull));
}

/// mt19937_64 with hand-rolled output transforms. The engine is fully
/// specified by the standard and the transforms below avoid the
/// implementation-defined std distributions, so every draw is reproducible
/// across platforms and toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi], inclusive. Unbiased via rejection.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (hi < lo) throw InputError("uniform_int: empty range");
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<std::int64_t>(next_u64());  // full range
        const std::uint64_t reject_above = UINT64_MAX - (UINT64_MAX % range + 1) % range;
        std::uint64_t x = next_u64();
        while (x > reject_above) x = next_u64();
        return lo + static_cast<std::int64_t>(x % range);
    }

    /// First k entries of a seeded Fisher-Yates shuffle of [0, n).
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = i;
        for (int i = 0; i < k && i < n - 1; ++i) {
            const int j = static_cast<int>(uniform_int(i, n - 1));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k < n ? k : n);
        return idx;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace obidet
