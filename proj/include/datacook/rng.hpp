#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

namespace datacook {

// Deterministic random stream: splitmix64 seed expansion feeding a
// xoshiro256++ generator. Normal deviates come from the Box-Muller
// transform with the spare value cached, so the full state is
// (xoshiro state, spare). Identical seeds give bit-identical streams.
//
// An Rng is single-owner; parallel code derives independent child seeds
// with derive_seed()/child() instead of sharing one instance.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    // Uniform in [0, 1), 53 random bits.
    double uniform();

    // Uniform in [lo, hi).
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller.
    double normal();

    // Unbiased integer in [0, n); n must be > 0.
    uint64_t next_below(uint64_t n);

    uint64_t seed() const { return seed_; }

    // Independent generator for logical substream `stream`.
    Rng child(uint64_t stream) const;

private:
    std::array<uint64_t, 4> state_;
    uint64_t seed_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// One splitmix64 step of `state`, advancing it.
uint64_t splitmix64_next(uint64_t& state);

// Deterministic child seed for (master, stream).
uint64_t derive_seed(uint64_t master, uint64_t stream);

// FNV-1a over arbitrary bytes; used for config/checkpoint fingerprints.
uint64_t fnv1a(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull);

} // namespace datacook
