#include "seedlab/toydata/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>

#include "seedlab/error.hpp"
#include "seedlab/numerics/rng.hpp"

namespace seedlab::toy {

FeatureMap::FeatureMap(std::size_t dim, std::uint64_t seed) : dim_(dim), weights_(kRows * dim) {
    num::Rng rng(seed);
    for (std::size_t r = 0; r < kRows; ++r) {
        double norm2 = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
            const double v = rng.normal();
            weights_[r * dim + c] = v;
            norm2 += v * v;
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (std::size_t c = 0; c < dim; ++c) weights_[r * dim + c] *= inv;
    }
}

const FeatureMap& FeatureMap::for_dim(std::size_t dim) {
    static const std::array<FeatureMap, 4> maps{
        FeatureMap(8, kSeed + 8), FeatureMap(16, kSeed + 16), FeatureMap(32, kSeed + 32), FeatureMap(64, kSeed + 64)};
    for (const auto& m : maps) {
        if (m.dim() == dim) return m;
    }
    throw ContractError("no feature map for dim " + std::to_string(dim));
}

std::vector<double> FeatureMap::project(std::span<const double> x) const {
    if (x.size() != dim_) throw ShapeError("feature projection dim mismatch");
    std::vector<double> out(kRows, 0.0);
    for (std::size_t r = 0; r < kRows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < dim_; ++c) s += weights_[r * dim_ + c] * x[c];
        out[r] = s;
    }
    return out;
}

std::vector<double> FeatureMap::project_blocks(std::span<const double> x, std::span<const Block> blocks) const {
    if (x.size() != dim_) throw ShapeError("feature projection dim mismatch");
    std::vector<double> masked(dim_, 0.0);
    for (Block b : blocks) {
        const auto range = block_range(dim_, b);
        for (std::size_t i = 0; i < range.size; ++i) masked[range.begin + i] = x[range.begin + i];
    }
    return project(masked);
}

std::optional<double> cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("cosine size mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return std::nullopt;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace seedlab::toy
