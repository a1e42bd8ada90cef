#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "robustsyn/models/classifier.hpp"

// Checkpoint container, little-endian throughout:
//
//   offset 0   8 bytes  magic "RSYNCKPT"
//   offset 8   u32      format version (currently 1)
//   offset 12  u64      manifest length M
//   offset 20  M bytes  manifest, UTF-8 JSON (spec, tensor table, training metadata)
//   offset 20+M         payload: each tensor as row-major f32, at the offset
//                       and length listed in the tensor table, with a CRC-32
//
// Serialization is deterministic, so save -> load -> save is byte-identical.
namespace robustsyn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Classifier& model);
Classifier deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Classifier& model, const std::filesystem::path& path);
Classifier load_checkpoint(const std::filesystem::path& path);

}  // namespace robustsyn
