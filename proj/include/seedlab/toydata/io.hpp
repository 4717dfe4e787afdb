#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "seedlab/toydata/types.hpp"

namespace seedlab::toy {

inline constexpr const char* kGeneratorVersion = "seedlab-toydata/1";

// One JSON object per line, keys in this order:
//   id, source_kind, task_label, tags, op_kind, params, quality, importance,
//   reverse_of, dim, source, target
// Floats are written with 17 significant digits. Instruction directions are
// derived data and are recomputed on read.
std::string to_json_line(const EditPair& pair);
EditPair from_json_line(const std::string& line);

void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

struct DatasetManifest {
    std::string generator_version = kGeneratorVersion;
    std::uint64_t seed = 0;
    std::size_t records = 0;
    std::array<std::size_t, kSourceKindCount> per_source_kind{};
};

DatasetManifest summarize(const Dataset& dataset, std::uint64_t seed);
// Sidecar written next to the dataset as <path>.manifest.json.
void write_manifest(const std::filesystem::path& dataset_path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& dataset_path);

}  // namespace seedlab::toy
