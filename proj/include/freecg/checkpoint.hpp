#pragma once

// Versioned binary checkpoint:
//   magic "FCG1", u32 format version, u32 array count, then per array:
//   u32 name length, name bytes, u32 rank, u64 dims..., row-major f64
//   little-endian payload. Model configuration and label normalization ride
//   along as one-element "cfg.*" / "norm.*" arrays.

#include <string>

#include "freecg/model.hpp"

namespace freecg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

}  // namespace freecg
