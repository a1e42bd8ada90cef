#include "robustsyn/robust/perturbation.hpp"

#include <algorithm>
#include <cmath>

namespace robustsyn {

std::string to_string(Norm n) { return n == Norm::l2 ? "l2" : "linf"; }

Norm parse_norm(const std::string& s) {
  if (s == "l2" || s == "L2") return Norm::l2;
  if (s == "linf" || s == "Linf" || s == "inf") return Norm::linf;
  throw InvalidArgument("unknown norm '" + s + "' (expected l2 or linf)");
}

PerturbationSet::PerturbationSet(Norm norm, double epsilon, const Tensor& anchor, double lo, double hi)
    : norm_(norm), epsilon_(epsilon), lo_(lo), hi_(hi) {
  if (!(epsilon >= 0) || !std::isfinite(epsilon)) throw InvalidArgument("perturbation radius must be finite and >= 0");
  if (!(lo < hi)) throw InvalidArgument("pixel box must satisfy lo < hi");
  if (!anchor.defined() || anchor.rank() < 1) throw ShapeError("perturbation anchor must be a batch tensor");
  std::vector<real> a(anchor.data().begin(), anchor.data().end());
  for (auto& v : a) v = std::clamp(v, static_cast<real>(lo), static_cast<real>(hi));
  anchor_ = Tensor::from(anchor.shape(), std::move(a));
}

void PerturbationSet::project_ball(std::span<real> s, std::int64_t n) const {
  const auto d = static_cast<std::size_t>(sample_size());
  if (s.size() != d) throw ShapeError("project_ball: sample size mismatch");
  const real* a = anchor_.data().data() + static_cast<std::size_t>(n) * d;
  if (epsilon_ == 0) {
    std::copy(a, a + d, s.begin());
    return;
  }
  if (norm_ == Norm::linf) {
    for (std::size_t i = 0; i < d; ++i) {
      const double lo = a[i] - epsilon_, hi = a[i] + epsilon_;
      s[i] = static_cast<real>(std::clamp(static_cast<double>(s[i]), lo, hi));
    }
    return;
  }
  double sq = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double dv = static_cast<double>(s[i]) - a[i];
    sq += dv * dv;
  }
  const double norm = std::sqrt(sq);
  if (norm <= epsilon_) return;
  const double f = epsilon_ / norm;
  for (std::size_t i = 0; i < d; ++i) s[i] = static_cast<real>(a[i] + (static_cast<double>(s[i]) - a[i]) * f);
  // Float rounding can leave the point a hair outside. Shrink by growing
  // factors until it is inside, so a second projection is a no-op.
  double shrink = 1e-7;
  for (int guard = 0; guard < 40 && distance(s, n) > epsilon_; ++guard, shrink *= 2) {
    for (std::size_t i = 0; i < d; ++i) {
      s[i] = static_cast<real>(a[i] + (static_cast<double>(s[i]) - a[i]) * (1.0 - shrink));
    }
  }
}

void PerturbationSet::project(std::span<real> z) const {
  const auto d = static_cast<std::size_t>(sample_size());
  if (z.size() != d * static_cast<std::size_t>(batch())) {
    throw ShapeError("project: expected " + std::to_string(d * static_cast<std::size_t>(batch())) + " values, got " +
                     std::to_string(z.size()));
  }
  const real lo = static_cast<real>(lo_), hi = static_cast<real>(hi_);
  for (std::int64_t n = 0; n < batch(); ++n) {
    auto s = z.subspan(static_cast<std::size_t>(n) * d, d);
    project_ball(s, n);
    for (auto& v : s) v = std::clamp(v, lo, hi);
  }
}

Tensor PerturbationSet::project(const Tensor& z) const {
  if (z.shape() != anchor_.shape()) throw ShapeError("project: shape " + shape_str(z.shape()) + " != anchor " + shape_str(anchor_.shape()));
  Tensor out = z.detach();
  project(out.mutable_data());
  return out;
}

double PerturbationSet::distance(std::span<const real> z, std::int64_t n) const {
  const auto d = static_cast<std::size_t>(sample_size());
  const real* a = anchor_.data().data() + static_cast<std::size_t>(n) * d;
  double acc = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const double dv = std::abs(static_cast<double>(z[i]) - a[i]);
    acc = norm_ == Norm::l2 ? acc + dv * dv : std::max(acc, dv);
  }
  return norm_ == Norm::l2 ? std::sqrt(acc) : acc;
}

bool PerturbationSet::contains(std::span<const real> z, double rel_tol) const {
  const auto d = static_cast<std::size_t>(sample_size());
  if (z.size() != d * static_cast<std::size_t>(batch())) return false;
  for (std::int64_t n = 0; n < batch(); ++n) {
    auto s = z.subspan(static_cast<std::size_t>(n) * d, d);
    if (distance(s, n) > epsilon_ * (1 + rel_tol)) return false;
    for (real v : s)
      if (v < lo_ || v > hi_) return false;
  }
  return true;
}

}  // namespace robustsyn
