#include "robustsyn/service/codec.hpp"

#include <openssl/evp.h>

#include <vector>

#include "robustsyn/data/image_io.hpp"

namespace robustsyn::service {

std::string base64_encode(std::string_view bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw InvalidArgument("base64 payload length is not a multiple of 4");
  std::string out(3 * (text.size() / 4), '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) throw InvalidArgument("malformed base64 payload");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

nlohmann::json encode_image(const Image& image, bool with_preview) {
  nlohmann::json j{{"channels", image.channels},
                   {"height", image.height},
                   {"width", image.width},
                   {"fif_b64", base64_encode(encode_fif(image))}};
  if (with_preview) j["png_b64"] = base64_encode(encode_png(image));
  return j;
}

Image decode_image(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("image must be an object");
  try {
    if (j.contains("fif_b64")) return decode_fif(base64_decode(j.at("fif_b64").get<std::string>()));
    if (j.contains("png_b64")) return decode_png(base64_decode(j.at("png_b64").get<std::string>()));
  } catch (const FormatError& e) {
    throw InvalidArgument(std::string("undecodable image: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("bad image field: ") + e.what());
  }
  throw InvalidArgument("image needs fif_b64 or png_b64");
}

}  // namespace robustsyn::service
