#pragma once

#include <vector>

#include "robustsyn/data/image.hpp"

namespace robustsyn {

// exp(mean_i KL(p_i || p_bar)) with natural logs. Rows must be probability
// vectors summing to 1 within 1e-5. The scoring network is whatever produced
// the rows, so scores are comparable only between runs that share it.
double inception_style_score(const std::vector<std::vector<double>>& probabilities);

struct Psnr {
  double db = 0;
  bool infinite = false;  // identical inputs; db then holds the largest finite double
};

Psnr psnr(const Image& a, const Image& b, double max_value = 1.0);
Psnr psnr(const std::vector<float>& a, const std::vector<float>& b, double max_value = 1.0);

}  // namespace robustsyn
