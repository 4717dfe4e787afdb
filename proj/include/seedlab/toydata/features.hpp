#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "seedlab/toydata/types.hpp"

namespace seedlab::toy {

// Fixed random projection standing in for an image embedding. 64 unit-norm
// rows, seed pinned per dimension class.
class FeatureMap {
public:
    static constexpr std::size_t kRows = 64;
    static constexpr std::uint64_t kSeed = 0x5EED1AB0ULL;

    FeatureMap(std::size_t dim, std::uint64_t seed);
    static const FeatureMap& for_dim(std::size_t dim);

    std::size_t dim() const { return dim_; }
    std::span<const double> row(std::size_t r) const { return {weights_.data() + r * dim_, dim_}; }

    std::vector<double> project(std::span<const double> x) const;
    // Projection of x with every block outside `blocks` zeroed.
    std::vector<double> project_blocks(std::span<const double> x, std::span<const Block> blocks) const;

private:
    std::size_t dim_;
    std::vector<double> weights_;
};

// Cosine similarity; std::nullopt when either vector has zero norm.
std::optional<double> cosine(std::span<const double> a, std::span<const double> b);

}  // namespace seedlab::toy
