#pragma once

#include <random>

#include "robustsyn/data/image.hpp"

namespace robustsyn {

// factor x factor block average. Height and width must be divisible by factor.
Image downsample(const Image& x, int factor);
// Nearest-neighbour upsampling: every pixel becomes a factor x factor block.
Image upsample_nn(const Image& x, int factor);

struct Corruption {
  Image corrupted;
  Image mask;  // 1 channel, 1 inside the patch
  int top = 0;
  int left = 0;
};

// Square patch of side patch_size at a uniformly random valid position; the
// patch is filled with the per-channel mean of the whole image.
Corruption corrupt_patch(const Image& x, int patch_size, std::mt19937_64& rng);

// Random crop after zero padding by `pad` on every side, then a horizontal
// flip with probability 1/2.
Image augment_crop_flip(const Image& x, int pad, std::mt19937_64& rng);

Image clip01(Image x);

// Mask with 1s in the rectangle [top, top+h) x [left, left+w).
Image rect_mask(int height, int width, int top, int left, int h, int w);

}  // namespace robustsyn
