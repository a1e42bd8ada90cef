#include "robustsyn/data/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace robustsyn {

namespace {

static_assert(std::endian::native == std::endian::little, "image I/O assumes a little-endian host");

constexpr char kMagic[4] = {'R', 'S', 'F', 'I'};
constexpr std::size_t kHeader = 20;

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

std::uint32_t get_u32(std::string_view bytes, std::size_t off) {
  std::uint32_t v;
  std::memcpy(&v, bytes.data() + off, 4);
  return v;
}

std::string lower_ext(const std::filesystem::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return e;
}

}  // namespace

std::string encode_fif(const Image& image) {
  if (image.size() != static_cast<std::size_t>(image.channels) * image.height * image.width || image.size() == 0) {
    throw ShapeError("encode_fif: header dimensions do not match pixel count");
  }
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float v = image.pixels[i];
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw InvalidArgument("encode_fif: value " + std::to_string(v) + " at index " + std::to_string(i) +
                            " outside [0, 1]");
    }
  }
  std::string out(kMagic, 4);
  put_u32(out, kFloatImageVersion);
  put_u32(out, static_cast<std::uint32_t>(image.width));
  put_u32(out, static_cast<std::uint32_t>(image.height));
  put_u32(out, static_cast<std::uint32_t>(image.channels));
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.size() * sizeof(float));
  return out;
}

Image decode_fif(std::string_view bytes) {
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("not a float image (bad magic)");
  const auto version = get_u32(bytes, 4);
  if (version != kFloatImageVersion) throw FormatError("unknown float image version " + std::to_string(version));
  const auto w = get_u32(bytes, 8), h = get_u32(bytes, 12), c = get_u32(bytes, 16);
  if (w == 0 || h == 0 || c == 0 || w > 65536 || h > 65536 || c > 64) throw FormatError("float image has invalid dimensions");
  const std::size_t n = static_cast<std::size_t>(w) * h * c;
  if (bytes.size() - kHeader != n * sizeof(float)) {
    throw FormatError("float image payload is " + std::to_string(bytes.size() - kHeader) + " bytes, header implies " +
                      std::to_string(n * sizeof(float)));
  }
  Image im(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
  std::memcpy(im.pixels.data(), bytes.data() + kHeader, n * sizeof(float));
  for (float v : im.pixels) {
    if (!std::isfinite(v)) throw FormatError("float image contains a non-finite value");
  }
  return im;
}

void write_fif(const Image& image, const std::filesystem::path& path) { write_file_bytes(path, encode_fif(image)); }
Image read_fif(const std::filesystem::path& path) { return decode_fif(read_file_bytes(path)); }

namespace {

struct PngReadState {
  std::string_view bytes;
  std::size_t pos = 0;
};

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw FormatError(std::string("png: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

}  // namespace

std::string encode_png(const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw InvalidArgument("encode_png: only 1- or 3-channel images");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw IoError("png: cannot allocate write struct");
  png_infop info = png_create_info_struct(png);
  std::string out;
  try {
    png_set_write_fn(
        png, &out,
        [](png_structp p, png_bytep data, png_size_t len) {
          static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<const char*>(data), len);
        },
        nullptr);
    png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
                 image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(image.width) * image.channels);
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        for (int c = 0; c < image.channels; ++c) {
          const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
          row[static_cast<std::size_t>(x) * image.channels + c] = static_cast<png_byte>(std::lround(v * 255.0f));
        }
      }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return out;
}

Image decode_png(std::string_view bytes) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0) {
    throw FormatError("not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  if (!png) throw IoError("png: cannot allocate read struct");
  png_infop info = png_create_info_struct(png);
  PngReadState state{bytes, 0};
  Image im;
  try {
    png_set_read_fn(png, &state, [](png_structp p, png_bytep data, png_size_t len) {
      auto* s = static_cast<PngReadState*>(png_get_io_ptr(p));
      if (s->pos + len > s->bytes.size()) png_error(p, "truncated data");
      std::memcpy(data, s->bytes.data() + s->pos, len);
      s->pos += len;
    });
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_packing(png);
    png_set_expand(png);
    const int color = png_get_color_type(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    png_read_update_info(png, info);
    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const int c = png_get_channels(png, info);
    if (c != 1 && c != 3) png_error(png, "unsupported channel layout");
    im = Image(c, h, w);
    std::vector<png_byte> row(png_get_rowbytes(png, info));
    for (int y = 0; y < h; ++y) {
      png_read_row(png, row.data(), nullptr);
      for (int x = 0; x < w; ++x) {
        for (int ch = 0; ch < c; ++ch) im.at(ch, y, x) = row[static_cast<std::size_t>(x) * c + ch] / 255.0f;
      }
    }
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return im;
}

void write_png(const Image& image, const std::filesystem::path& path) { write_file_bytes(path, encode_png(image)); }
Image read_png(const std::filesystem::path& path) { return decode_png(read_file_bytes(path)); }

Image read_image(const std::filesystem::path& path) {
  const auto ext = lower_ext(path);
  if (ext == ".fif") return read_fif(path);
  if (ext == ".png") return read_png(path);
  throw InvalidArgument("unsupported image extension '" + ext + "' (expected .fif or .png)");
}

void write_image(const Image& image, const std::filesystem::path& path) {
  const auto ext = lower_ext(path);
  if (ext == ".fif") return write_fif(image, path);
  if (ext == ".png") return write_png(image, path);
  throw InvalidArgument("unsupported image extension '" + ext + "' (expected .fif or .png)");
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace robustsyn
