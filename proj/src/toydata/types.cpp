#include "seedlab/toydata/types.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "seedlab/error.hpp"

namespace seedlab::toy {

bool is_supported_dim(std::size_t dim) {
    return std::find(kSupportedDims.begin(), kSupportedDims.end(), dim) != kSupportedDims.end();
}

BlockRange block_range(std::size_t dim, Block block) {
    const std::size_t size = dim / kBlockCount;
    return {static_cast<std::size_t>(block) * size, size};
}

std::span<const double> ToySample::block(Block b) const {
    const auto r = block_range(dim(), b);
    return std::span<const double>(values).subspan(r.begin, r.size);
}

std::span<double> ToySample::block(Block b) {
    const auto r = block_range(dim(), b);
    return std::span<double>(values).subspan(r.begin, r.size);
}

std::size_t TagSet::count() const { return static_cast<std::size_t>(std::popcount(bits_)); }

namespace {

constexpr std::array<std::string_view, kOpKindCount> kOpNames{
    "shift_content", "rotate_structure", "swap_style", "change_identity", "global_restyle", "identity_noop"};
constexpr std::array<std::string_view, kTaskLabelCount> kLabelNames{"default_edit", "specialist", "traditional_op",
                                                                    "video_pair"};
constexpr std::array<std::string_view, kTagCount> kTagNames{"local_edit", "identity_preserve",
                                                            "structure_preserve", "style_preserve"};
constexpr std::array<std::string_view, kSourceKindCount> kSourceNames{"synthesized", "specialist", "traditional_op",
                                                                      "video_frames"};
constexpr std::array<std::string_view, kBlockCount> kBlockNames{"identity", "structure", "style", "content"};

template <class E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::string_view, N>& names, const char* what) {
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == s) return static_cast<E>(i);
    }
    throw ContractError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

}  // namespace

std::string_view to_string(OpKind k) { return kOpNames.at(static_cast<std::size_t>(k)); }
std::string_view to_string(TaskLabel k) { return kLabelNames.at(static_cast<std::size_t>(k)); }
std::string_view to_string(Tag k) { return kTagNames.at(static_cast<std::size_t>(k)); }
std::string_view to_string(SourceKind k) { return kSourceNames.at(static_cast<std::size_t>(k)); }
std::string_view to_string(Block b) { return kBlockNames.at(static_cast<std::size_t>(b)); }

OpKind parse_op_kind(std::string_view s) { return parse_enum<OpKind>(s, kOpNames, "op_kind"); }
TaskLabel parse_task_label(std::string_view s) { return parse_enum<TaskLabel>(s, kLabelNames, "task_label"); }
Tag parse_tag(std::string_view s) { return parse_enum<Tag>(s, kTagNames, "tag"); }
SourceKind parse_source_kind(std::string_view s) { return parse_enum<SourceKind>(s, kSourceNames, "source_kind"); }

TaskLabel label_for(SourceKind kind) {
    switch (kind) {
        case SourceKind::synthesized:
            return TaskLabel::default_edit;
        case SourceKind::specialist:
            return TaskLabel::specialist;
        case SourceKind::traditional_op:
            return TaskLabel::traditional_op;
        case SourceKind::video_frames:
            return TaskLabel::video_pair;
    }
    return TaskLabel::default_edit;
}

bool is_invertible(OpKind k) {
    return k == OpKind::shift_content || k == OpKind::rotate_structure || k == OpKind::swap_style ||
           k == OpKind::global_restyle;
}

std::vector<Block> edited_blocks(OpKind k) {
    switch (k) {
        case OpKind::shift_content:
            return {Block::content};
        case OpKind::rotate_structure:
            return {Block::structure};
        case OpKind::swap_style:
            return {Block::style};
        case OpKind::change_identity:
            return {Block::identity};
        case OpKind::global_restyle:
            return {Block::structure, Block::style, Block::content};
        case OpKind::identity_noop:
            return {};
    }
    return {};
}

}  // namespace seedlab::toy
