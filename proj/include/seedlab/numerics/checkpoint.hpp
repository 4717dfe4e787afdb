#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "seedlab/numerics/params.hpp"

namespace seedlab::num {

// Binary layout (all integers little-endian):
//   "SEDL"                     4-byte magic
//   u8  version                kCheckpointVersion
//   u8  flags                  bit 0: distilled student
//   f32 w_image_lo, w_image_hi, w_text_lo, w_text_hi   trained guidance ranges
//   u32 tensor count
//   shape table, per tensor:   u16 name length, name bytes, u8 rank, u32 dims[rank]
//   payloads, per tensor:      f32 values, row-major
//
// Payloads are 32-bit, so a round trip is bit-exact for f32-representable values.
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct CheckpointHeader {
    bool student = false;
    std::array<float, 4> guidance_range{0.0f, 0.0f, 0.0f, 0.0f};
    bool operator==(const CheckpointHeader&) const = default;
};

struct Checkpoint {
    CheckpointHeader header;
    ParamStore params;
};

class CheckpointError : public std::runtime_error {
public:
    enum class Kind { io, bad_magic, version_mismatch, truncated, malformed };
    CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

std::vector<std::uint8_t> encode_checkpoint(const ParamStore& params, const CheckpointHeader& header = {});
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const CheckpointHeader& header = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rounds every parameter to the nearest f32, i.e. what a save/load cycle yields.
void round_to_f32(ParamStore& params);

}  // namespace seedlab::num
