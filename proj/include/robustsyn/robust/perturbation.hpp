#pragma once

#include <span>
#include <string>

#include "robustsyn/tensor/tensor.hpp"

namespace robustsyn {

enum class Norm { l2, linf };

std::string to_string(Norm n);
Norm parse_norm(const std::string& s);

// Per-sample norm ball of radius epsilon around an anchor batch [N, ...],
// intersected with the pixel box [lo, hi]. The anchor is clipped into the
// box on construction, so clipping never moves a point out of the ball.
class PerturbationSet {
 public:
  PerturbationSet(Norm norm, double epsilon, const Tensor& anchor, double lo = 0.0, double hi = 1.0);

  Norm norm() const { return norm_; }
  double epsilon() const { return epsilon_; }
  double lo() const { return lo_; }
  double hi() const { return hi_; }
  const Tensor& anchor() const { return anchor_; }
  std::int64_t batch() const { return anchor_.dim(0); }
  std::int64_t sample_size() const { return anchor_.numel() / anchor_.dim(0); }

  // Ball projection followed by box clipping, in place, for every sample.
  void project(std::span<real> z) const;
  Tensor project(const Tensor& z) const;
  // Ball projection only (no clipping) for sample n.
  void project_ball(std::span<real> sample, std::int64_t n) const;

  // Per-sample distance to the anchor in this set's norm.
  double distance(std::span<const real> z, std::int64_t n) const;
  bool contains(std::span<const real> z, double rel_tol = 1e-5) const;

 private:
  Norm norm_;
  double epsilon_;
  double lo_, hi_;
  Tensor anchor_;
};

}  // namespace robustsyn
