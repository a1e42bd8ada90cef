#include "robustsyn/data/transforms.hpp"

#include <algorithm>
#include <string>

namespace robustsyn {

Image downsample(const Image& x, int factor) {
  if (factor < 1) throw InvalidArgument("downsample: factor must be >= 1");
  if (x.height % factor || x.width % factor) {
    throw InvalidArgument("downsample: " + std::to_string(x.height) + "x" + std::to_string(x.width) +
                          " is not divisible by " + std::to_string(factor));
  }
  Image out(x.channels, x.height / factor, x.width / factor);
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int xx = 0; xx < out.width; ++xx) {
        double s = 0;
        for (int u = 0; u < factor; ++u)
          for (int v = 0; v < factor; ++v) s += x.at(c, y * factor + u, xx * factor + v);
        out.at(c, y, xx) = static_cast<float>(s * inv);
      }
  return out;
}

Image upsample_nn(const Image& x, int factor) {
  if (factor < 1) throw InvalidArgument("upsample_nn: factor must be >= 1");
  Image out(x.channels, x.height * factor, x.width * factor);
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < out.height; ++y)
      for (int xx = 0; xx < out.width; ++xx) out.at(c, y, xx) = x.at(c, y / factor, xx / factor);
  return out;
}

Corruption corrupt_patch(const Image& x, int patch_size, std::mt19937_64& rng) {
  if (patch_size < 1 || patch_size > std::min(x.height, x.width)) {
    throw InvalidArgument("corrupt_patch: patch size " + std::to_string(patch_size) + " does not fit a " +
                          std::to_string(x.height) + "x" + std::to_string(x.width) + " image");
  }
  Corruption r;
  r.top = std::uniform_int_distribution<int>(0, x.height - patch_size)(rng);
  r.left = std::uniform_int_distribution<int>(0, x.width - patch_size)(rng);
  r.corrupted = x;
  r.mask = rect_mask(x.height, x.width, r.top, r.left, patch_size, patch_size);
  const auto means = channel_means(x);
  for (int c = 0; c < x.channels; ++c)
    for (int y = r.top; y < r.top + patch_size; ++y)
      for (int xx = r.left; xx < r.left + patch_size; ++xx)
        r.corrupted.at(c, y, xx) = static_cast<float>(means[static_cast<std::size_t>(c)]);
  return r;
}

Image augment_crop_flip(const Image& x, int pad, std::mt19937_64& rng) {
  const int dy = std::uniform_int_distribution<int>(-pad, pad)(rng);
  const int dx = std::uniform_int_distribution<int>(-pad, pad)(rng);
  const bool flip = std::bernoulli_distribution(0.5)(rng);
  Image out(x.channels, x.height, x.width, 0.0f);
  for (int c = 0; c < x.channels; ++c)
    for (int y = 0; y < x.height; ++y)
      for (int xx = 0; xx < x.width; ++xx) {
        const int sy = y + dy;
        const int sx0 = xx + dx;
        const int sx = flip ? x.width - 1 - sx0 : sx0;
        if (sy < 0 || sy >= x.height || sx0 < 0 || sx0 >= x.width) continue;
        out.at(c, y, xx) = x.at(c, sy, sx);
      }
  return out;
}

Image clip01(Image x) {
  for (auto& v : x.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return x;
}

Image rect_mask(int height, int width, int top, int left, int h, int w) {
  Image m(1, height, width, 0.0f);
  for (int y = std::max(0, top); y < std::min(height, top + h); ++y)
    for (int x = std::max(0, left); x < std::min(width, left + w); ++x) m.at(0, y, x) = 1.0f;
  return m;
}

}  // namespace robustsyn
