// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mdunet/net.hpp"

namespace mdunet {

/// Checkpoint file layout (all integers little-endian):
///
///   offset 0   8 bytes   magic "MDUNETCK"
///   offset 8   uint32    format version (1)
///   offset 12  uint32    manifest length M in bytes
///   offset 16  M bytes   UTF-8 JSON manifest
///   offset 16+M          float32 payload
///
/// The manifest holds {"format", "version", "seed", "config", "tensors"},
/// where each tensor entry is {"name", "shape", "offset", "count"} and
/// offset counts bytes from the start of the payload.
inline constexpr char kCheckpointMagic[8] = {'M', 'D', 'U', 'N', 'E', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const MultiDecoderNet& net,
                     std::uint64_t seed = 0);
MultiDecoderNet load_checkpoint(const std::filesystem::path& path);

std::string model_config_json(const ModelConfig& c);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace mdunet
