#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>

namespace seedlab::cli {

inline constexpr const char* kToolVersion = "seedlab 1.0.0";

// 1 is reserved for unexpected failures outside the library error types.
enum ExitCode : int { kExitOk = 0, kExitInternal = 1, kExitUsage = 2, kExitConfig = 3, kExitContract = 4 };

// Subcommands: gen-data, train, distill, quantize, sample, eval, sweep, bench.
// Results go under --out with a manifest.json; diagnostics go to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// 64-bit FNV-1a.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes);
std::uint64_t file_hash(const std::filesystem::path& path);

}  // namespace seedlab::cli
