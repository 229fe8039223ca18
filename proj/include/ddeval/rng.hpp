// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ddeval {

// splitmix64 finalizer; used to derive independent substream seeds.
inline uint64_t mix_seed(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic RNG: the mt19937_64 engine is bit-specified by the standard,
// and all conversions below avoid std distributions (whose outputs are
// implementation-defined), so identical seeds give identical streams on any
// platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), engine_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1) with 53 random bits
    double next_double() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // unbiased uniform integer in [0, n), n >= 1
    uint64_t next_below(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    // independent substream keyed by tag; derivation depends only on the
    // construction seed, not on how much of this stream was consumed
    Rng fork(uint64_t tag) const { return Rng(mix_seed(seed_, tag)); }

    // Fisher-Yates
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace ddeval
