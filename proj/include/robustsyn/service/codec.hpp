#pragma once

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "robustsyn/data/image.hpp"

namespace robustsyn::service {

inline constexpr int kSchemaVersion = 1;

std::string base64_encode(std::string_view bytes);
// Throws InvalidArgument on malformed input.
std::string base64_decode(std::string_view text);

// {"fif_b64": <lossless float image>, "png_b64": <8-bit preview>,
//  "channels": C, "height": H, "width": W}. The preview is omitted when
// with_preview is false.
nlohmann::json encode_image(const Image& image, bool with_preview = true);
// Reads "fif_b64" (or "png_b64" when no float payload is present).
Image decode_image(const nlohmann::json& j);

}  // namespace robustsyn::service
