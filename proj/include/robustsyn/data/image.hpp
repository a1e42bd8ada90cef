#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "robustsyn/tensor/tensor.hpp"

namespace robustsyn {

// A single image stored channel-planar (CHW), row-major within each plane.
// Values are nominally in [0, 1].
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f);

  std::size_t size() const { return pixels.size(); }
  float& at(int c, int y, int x) { return pixels[index(c, y, x)]; }
  float at(int c, int y, int x) const { return pixels[index(c, y, x)]; }
  std::size_t index(int c, int y, int x) const {
    return (static_cast<std::size_t>(c) * height + y) * width + x;
  }
  bool same_shape(const Image& o) const { return channels == o.channels && height == o.height && width == o.width; }
  bool operator==(const Image&) const = default;
};

// Stacks images into one [N, C, H, W] tensor. All images must share a shape.
Tensor to_batch(std::span<const Image> images, bool requires_grad = false);
Tensor to_batch(const Image& image, bool requires_grad = false);
// Splits a [N, C, H, W] tensor back into images.
std::vector<Image> from_batch(const Tensor& batch);

// Per-channel mean over the whole image.
std::vector<double> channel_means(const Image& image);

}  // namespace robustsyn
