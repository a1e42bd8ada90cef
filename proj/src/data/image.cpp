#include "robustsyn/data/image.hpp"

#include <string>

namespace robustsyn {

Image::Image(int c, int h, int w, float fill) : channels(c), height(h), width(w) {
  if (c <= 0 || h <= 0 || w <= 0) throw ShapeError("image dimensions must be positive");
  pixels.assign(static_cast<std::size_t>(c) * h * w, fill);
}

Tensor to_batch(std::span<const Image> images, bool requires_grad) {
  if (images.empty()) throw InvalidArgument("to_batch: no images");
  const Image& first = images.front();
  std::vector<real> data;
  data.reserve(first.size() * images.size());
  for (const Image& im : images) {
    if (!im.same_shape(first)) throw ShapeError("to_batch: images have different shapes");
    data.insert(data.end(), im.pixels.begin(), im.pixels.end());
  }
  return Tensor::from({static_cast<std::int64_t>(images.size()), first.channels, first.height, first.width},
                      std::move(data), requires_grad);
}

Tensor to_batch(const Image& image, bool requires_grad) { return to_batch(std::span<const Image>(&image, 1), requires_grad); }

std::vector<Image> from_batch(const Tensor& batch) {
  if (batch.rank() != 4) throw ShapeError("from_batch expects [N,C,H,W], got " + shape_str(batch.shape()));
  const int n = static_cast<int>(batch.dim(0));
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(n));
  auto d = batch.data();
  for (int i = 0; i < n; ++i) {
    Image im(static_cast<int>(batch.dim(1)), static_cast<int>(batch.dim(2)), static_cast<int>(batch.dim(3)));
    const std::size_t off = static_cast<std::size_t>(i) * im.size();
    for (std::size_t j = 0; j < im.size(); ++j) im.pixels[j] = static_cast<float>(d[off + j]);
    out.push_back(std::move(im));
  }
  return out;
}

std::vector<double> channel_means(const Image& image) {
  std::vector<double> m(static_cast<std::size_t>(image.channels), 0.0);
  const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
  for (int c = 0; c < image.channels; ++c) {
    double s = 0;
    for (std::size_t i = 0; i < plane; ++i) s += image.pixels[c * plane + i];
    m[static_cast<std::size_t>(c)] = s / static_cast<double>(plane);
  }
  return m;
}

}  // namespace robustsyn
