#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace seedlab::toy {

inline constexpr std::array<std::size_t, 4> kSupportedDims{8, 16, 32, 64};
inline constexpr double kValueBound = 4.0;
inline constexpr double kDefaultTagTolerance = 1e-3;
inline constexpr double kLeakSigma = 0.1;

bool is_supported_dim(std::size_t dim);

// Four equal contiguous blocks; "face" identity comes first.
enum class Block : std::uint8_t { identity = 0, structure = 1, style = 2, content = 3 };
inline constexpr std::size_t kBlockCount = 4;

struct BlockRange {
    std::size_t begin;
    std::size_t size;
};
BlockRange block_range(std::size_t dim, Block block);

struct ToySample {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
    std::span<const double> block(Block b) const;
    std::span<double> block(Block b);
    bool operator==(const ToySample&) const = default;
};

enum class OpKind : std::uint8_t {
    shift_content = 0,
    rotate_structure,
    swap_style,
    change_identity,
    global_restyle,
    identity_noop,
};
inline constexpr std::size_t kOpKindCount = 6;

struct Instruction {
    OpKind op = OpKind::identity_noop;
    std::array<double, 4> params{};
    // Unit vector in feature space along the edit's displacement, computed
    // against the source it was attached to. Empty when the edit is null.
    std::vector<double> direction;

    bool same_edit(const Instruction& o) const { return op == o.op && params == o.params; }
};

enum class TaskLabel : std::uint8_t { default_edit = 0, specialist, traditional_op, video_pair };
inline constexpr std::size_t kTaskLabelCount = 4;

enum class Tag : std::uint8_t { local_edit = 0, identity_preserve, structure_preserve, style_preserve };
inline constexpr std::size_t kTagCount = 4;

class TagSet {
public:
    TagSet() = default;
    static TagSet from_bits(std::uint8_t bits) {
        TagSet t;
        t.bits_ = bits & 0x0F;
        return t;
    }
    bool has(Tag t) const { return (bits_ >> static_cast<int>(t)) & 1u; }
    void set(Tag t) { bits_ |= static_cast<std::uint8_t>(1u << static_cast<int>(t)); }
    std::uint8_t bits() const { return bits_; }
    std::size_t count() const;
    bool empty() const { return bits_ == 0; }
    bool operator==(const TagSet&) const = default;

private:
    std::uint8_t bits_ = 0;
};

enum class SourceKind : std::uint8_t { synthesized = 0, specialist, traditional_op, video_frames };
inline constexpr std::size_t kSourceKindCount = 4;

struct MetaInfo {
    TaskLabel task_label = TaskLabel::default_edit;
    TagSet tags;
    SourceKind source_kind = SourceKind::synthesized;
    bool operator==(const MetaInfo&) const = default;
};

struct EditPair {
    std::uint64_t id = 0;
    ToySample source;
    ToySample target;
    Instruction instruction;
    MetaInfo meta;
    double quality = 1.0;
    // Loss multiplier restoring the pre-resampling distribution (1 if never resampled).
    double importance = 1.0;
    // Set on records produced by reverse augmentation.
    std::optional<std::uint64_t> reverse_of;
};

using Dataset = std::vector<EditPair>;

std::string_view to_string(OpKind k);
std::string_view to_string(TaskLabel k);
std::string_view to_string(Tag k);
std::string_view to_string(SourceKind k);
std::string_view to_string(Block b);
OpKind parse_op_kind(std::string_view s);
TaskLabel parse_task_label(std::string_view s);
Tag parse_tag(std::string_view s);
SourceKind parse_source_kind(std::string_view s);

// Task label used for each data source.
TaskLabel label_for(SourceKind kind);

// Whether an exact inverse exists for the op kind.
bool is_invertible(OpKind k);

// Blocks an op kind is meant to modify.
std::vector<Block> edited_blocks(OpKind k);

}  // namespace seedlab::toy
