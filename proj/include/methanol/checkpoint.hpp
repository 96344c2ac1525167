#pragma once

#include <filesystem>

#include "methanol/model.hpp"

namespace methanol {

// Checkpoint layout: a directory holding
//   manifest.json  - format version, config, parameter names/shapes/offsets
//   params.bin     - little-endian float32 buffers, concatenated in manifest order
// Round-trips are bitwise lossless.
void save_checkpoint(const ThinkingTransformer& model, const std::filesystem::path& dir);
ThinkingTransformer load_checkpoint(const std::filesystem::path& dir);

}  // namespace methanol
