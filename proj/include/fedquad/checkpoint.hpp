#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "fedquad/params.hpp"

// FQCK checkpoint layout, all integers little-endian:
//   "FQCK" | version u32 | entry count u64 |
//   per entry: name length u32 | UTF-8 name | rank u32 | extents u64 x rank |
//              values f64 x prod(extents)
namespace fedquad {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const ModelParams& params);
// Throws DataError naming the byte offset of any malformed field. Entries
// named "*.running_mean" / "*.running_var" come back as non-trainable buffers.
ModelParams decode_checkpoint(std::string_view bytes);

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace fedquad
