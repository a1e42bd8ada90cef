#include "robustsyn/synthesis/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "robustsyn/common.hpp"

namespace robustsyn {

double inception_style_score(const std::vector<std::vector<double>>& p) {
  if (p.empty()) throw InvalidArgument("inception_style_score: no rows");
  const std::size_t k = p.front().size();
  if (k == 0) throw InvalidArgument("inception_style_score: empty rows");
  std::vector<double> marginal(k, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].size() != k) throw InvalidArgument("inception_style_score: ragged rows");
    double s = 0;
    for (double v : p[i]) {
      if (!(v >= 0) || !std::isfinite(v)) throw InvalidArgument("inception_style_score: row " + std::to_string(i) + " has an invalid entry");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-5) throw InvalidArgument("inception_style_score: row " + std::to_string(i) + " does not sum to 1");
    for (std::size_t j = 0; j < k; ++j) marginal[j] += p[i][j];
  }
  for (auto& m : marginal) m /= static_cast<double>(p.size());
  double kl_sum = 0;
  for (const auto& row : p) {
    double kl = 0;
    for (std::size_t j = 0; j < k; ++j)
      if (row[j] > 0) kl += row[j] * (std::log(row[j]) - std::log(marginal[j]));
    kl_sum += kl;
  }
  return std::exp(kl_sum / static_cast<double>(p.size()));
}

Psnr psnr(const std::vector<float>& a, const std::vector<float>& b, double max_value) {
  if (a.size() != b.size()) throw ShapeError("psnr: inputs differ in size");
  if (a.empty()) throw InvalidArgument("psnr: empty inputs");
  if (!(max_value > 0)) throw InvalidArgument("psnr: max_value must be > 0");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  if (se == 0) return {std::numeric_limits<double>::max(), true};
  const double mse = se / static_cast<double>(a.size());
  return {10.0 * std::log10(max_value * max_value / mse), false};
}

Psnr psnr(const Image& a, const Image& b, double max_value) {
  if (!a.same_shape(b)) throw ShapeError("psnr: image shapes differ");
  return psnr(a.pixels, b.pixels, max_value);
}

}  // namespace robustsyn
