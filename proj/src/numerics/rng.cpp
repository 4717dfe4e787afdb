#include "seedlab/numerics/rng.hpp"

#include <cmath>
#include <numbers>

#include "seedlab/error.hpp"

namespace seedlab::num {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64_mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() {
    ++state_.counter;
    return splitmix64_mix(state_.seed + state_.counter * kGolden);
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    // (0, 1] keeps the logarithm finite.
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw ContractError("Rng::below(0)");
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

Rng Rng::fork(std::uint64_t stream) const {
    return Rng(splitmix64_mix(state_.seed ^ splitmix64_mix(stream + kGolden)), 0);
}

}  // namespace seedlab::num
