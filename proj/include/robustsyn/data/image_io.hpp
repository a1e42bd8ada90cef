#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "robustsyn/data/image.hpp"

// Float image file (.fif), little-endian:
//
//   offset 0   4 bytes  magic "RSFI"
//   offset 4   u32      version (1)
//   offset 8   u32      width
//   offset 12  u32      height
//   offset 16  u32      channels
//   offset 20           width*height*channels f32 values, channel-planar,
//                       each plane row-major
//
// Masks use the same container with channels = 1 and values in {0, 1}.
namespace robustsyn {

inline constexpr std::uint32_t kFloatImageVersion = 1;

// Rejects NaN/Inf and values outside [0, 1].
std::string encode_fif(const Image& image);
Image decode_fif(std::string_view bytes);
void write_fif(const Image& image, const std::filesystem::path& path);
Image read_fif(const std::filesystem::path& path);

// 8-bit PNG for viewing. Values are clamped to [0, 1] and rounded; 1- and
// 3-channel images only. Reading returns values k/255.
std::string encode_png(const Image& image);
Image decode_png(std::string_view bytes);
void write_png(const Image& image, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

// Dispatches on the extension (.fif or .png).
Image read_image(const std::filesystem::path& path);
void write_image(const Image& image, const std::filesystem::path& path);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace robustsyn
