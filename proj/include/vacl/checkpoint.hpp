#pragma once

// Binary checkpoint layout, all integers little-endian:
//
//   "VACL"                      4-byte magic
//   version                     u32
//   entry count                 u32
//   per entry:
//     name length, name bytes   u32 + UTF-8
//     ndim, dims                u32 + ndim * u64
//     payload                   product(dims) * float64 (IEEE-754, LE)
//   CRC-32 of everything above  u32

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "vacl/autodiff.hpp"

namespace vacl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const ParamMap& tensors);
/// Throws IoError on bad magic, unsupported version, truncation, trailing
/// bytes, duplicate names or CRC mismatch.
ParamMap parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamMap& tensors);
ParamMap load_checkpoint(const std::filesystem::path& path);

/// Writes through a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace vacl
