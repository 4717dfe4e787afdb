#pragma once

#include <cstdint>

namespace seedlab::num {

struct RngState {
    std::uint64_t seed = 0;
    std::uint64_t counter = 0;
    bool operator==(const RngState&) const = default;
};

// Counter-based generator: draw i of a stream is splitmix64_mix(seed + (i+1)*golden).
// Equal (seed, counter) give equal draws on every platform. Derived streams
// (fork) depend only on the parent seed and the stream id, so records can be
// generated in any order.
//
// Uniform doubles use the top 53 bits. Normals use Box-Muller (cosine branch
// only), consuming two draws each.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0, std::uint64_t counter = 0) : state_{seed, counter} {}
    explicit Rng(RngState s) : state_(s) {}

    std::uint64_t next_u64();
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);   // [lo, hi)
    double normal();                        // N(0, 1)
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    std::uint64_t below(std::uint64_t n);   // uniform in [0, n), unbiased
    bool bernoulli(double p) { return uniform() < p; }

    Rng fork(std::uint64_t stream) const;

    RngState state() const { return state_; }

private:
    RngState state_;
};

std::uint64_t splitmix64_mix(std::uint64_t z);

}  // namespace seedlab::num
