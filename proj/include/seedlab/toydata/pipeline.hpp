#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "seedlab/numerics/rng.hpp"
#include "seedlab/toydata/types.hpp"

namespace seedlab::toy {

struct GenOptions {
    // Op kinds to draw from; empty selects the source kind's default mix.
    std::vector<OpKind> ops;
    // Added to the record index to form record ids and RNG stream ids.
    std::uint64_t id_offset = 0;
    // Video pairs: probability that the second frame is an unrelated scene.
    double video_cut_probability = 0.1;
};

std::vector<OpKind> default_ops(SourceKind kind);

// Records are independent: record i draws only from rng.fork(id_offset + i).
Dataset gen_pairs(SourceKind kind, std::size_t n, std::span<const std::size_t> dims, const num::Rng& rng,
                  const GenOptions& options = {});

// Step one of re-captioning: what changed between source and target.
struct BlockAnalysis {
    std::array<double, kBlockCount> rms_diff{};
    std::array<double, kBlockCount> max_abs_diff{};
    std::array<double, kBlockCount> similarity{};  // cosine per block, 1 when both are zero
};
BlockAnalysis analyze_blocks(const ToySample& source, const ToySample& target);

// Two-step re-captioning: block analysis, then op kind from the dominant
// change and least-squares parameters. The returned instruction has its
// direction attached.
Instruction recaption(const EditPair& pair, double tag_tolerance = kDefaultTagTolerance);

TagSet compute_tags(const ToySample& source, const ToySample& target, double tag_tolerance = kDefaultTagTolerance);

enum class FilterReason { kept, similarity, displacement };
std::string_view to_string(FilterReason r);

struct FilterDecision {
    bool keep = true;
    FilterReason reason = FilterReason::kept;
    double similarity = 1.0;
    double max_displacement = 0.0;
};

inline constexpr double kDefaultFilterSimilarity = 0.8;
inline constexpr double kDefaultFilterChange = 2.0;

// Feature cosine must reach `min_similarity` and the largest per-block L2
// displacement must not exceed `max_change`.
FilterDecision filter_pair(const EditPair& pair, double min_similarity = kDefaultFilterSimilarity,
                           double max_change = kDefaultFilterChange);

// Appends (target -> source, inverse instruction) for every invertible record
// that is not itself a reversal and has no reversal yet.
Dataset augment_reverse(const Dataset& dataset);

struct ResampleResult {
    Dataset dataset;
    std::vector<std::string> warnings;
};

// Draws `n_out` records (default: input size) with replacement so that op
// kind frequencies follow the normalized class weights. Each drawn record's
// importance is multiplied by original_freq / resampled_freq of its class.
ResampleResult importance_resample(const Dataset& dataset, const std::array<double, kOpKindCount>& class_weights,
                                   num::Rng& rng, std::size_t n_out = 0);

struct Bucket {
    std::size_t dim = 0;
    std::vector<std::size_t> indices;  // into the dataset
};

// Dimension-homogeneous batches of floor(token_budget / dim) records, ordered
// by nondecreasing dim. The last batch of a dim may be short unless drop_tail.
std::vector<Bucket> plan_buckets(const Dataset& dataset, std::size_t token_budget, bool drop_tail = false);

}  // namespace seedlab::toy
