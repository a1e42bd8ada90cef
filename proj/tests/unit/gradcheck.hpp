#pragma once

// Central finite-difference oracle for the autodiff engine. Independent of
// backward(): it only evaluates forward losses at perturbed inputs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "robustsyn/tensor/tensor.hpp"

namespace robustsyn::testing {

using LossFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct GradCheckReport {
  double max_error = 0;   // max |analytic - numeric| / max |numeric| per tensor
  int checked = 0;
  int skipped_kinks = 0;  // coordinates within one step of a non-differentiable point
};

// Compares analytic gradients of every requires_grad input with central
// differences of step h on up to `max_coords` coordinates per tensor.
// A coordinate whose central differences at h and h/4 disagree by more than
// `kink_tol`, or whose one-sided slope gap does not shrink with the step
// (beyond `asym_tol` plus rounding noise, relative to the gradient scale), straddles a ReLU/max-pool kink where
// the derivative is undefined; such coordinates are counted, not compared.
inline GradCheckReport grad_check(std::vector<Tensor> inputs, const LossFn& loss_fn, double h, std::mt19937_64& rng,
                                  int max_coords = 48, double kink_tol = 0.05, double asym_tol = 0.01) {
  for (auto& t : inputs) t.zero_grad();
  Tensor loss = loss_fn(inputs);
  loss.backward();
  std::vector<std::vector<real>> analytic;
  for (auto& t : inputs) {
    if (t.requires_grad()) {
      std::vector<real> g(t.grad().begin(), t.grad().end());
      if (g.empty()) g.assign(static_cast<std::size_t>(t.numel()), 0);
      analytic.push_back(std::move(g));
    } else {
      analytic.emplace_back();
    }
  }
  auto eval = [&]() { return static_cast<double>(loss_fn(inputs).item()); };
  const double f0 = eval();
  // Rough bound on the rounding noise of one loss difference.
  const double noise = 2 * std::numeric_limits<real>::epsilon() * (std::abs(f0) + 1);
  GradCheckReport report;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = inputs[ti];
    if (!t.requires_grad()) continue;
    const auto n = static_cast<std::size_t>(t.numel());
    std::vector<std::size_t> coords(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(std::min<std::size_t>(n, static_cast<std::size_t>(max_coords)));
    double scale = 0;
    for (real v : analytic[ti]) scale = std::max(scale, std::abs(static_cast<double>(v)));
    scale = std::max(scale, 1e-6);
    double worst = 0;
    for (std::size_t c : coords) {
      auto data = t.mutable_data();
      const real orig = data[c];
      // Returns {forward slope, backward slope} for a step of `step`.
      auto slopes = [&](double step) {
        data[c] = static_cast<real>(orig + step);
        const double fp = eval();
        const double hp = static_cast<double>(data[c]) - orig;
        data[c] = static_cast<real>(orig - step);
        const double fm = eval();
        const double hm = orig - static_cast<double>(data[c]);
        data[c] = orig;
        return std::pair<double, double>{(fp - f0) / hp, (f0 - fm) / hm};
      };
      auto central = [](std::pair<double, double> s) { return 0.5 * (s.first + s.second); };
      const auto base = slopes(h);
      const auto narrow = slopes(h / 4);
      const auto wide = slopes(4 * h);
      const double numeric = central(base);
      // A kink sitting almost exactly on the coordinate shifts both central
      // differences by the same amount, so the one-sided slopes are compared
      // too. On a smooth function their gap grows linearly with the step; a
      // kink within reach of the step adds a jump that does not scale.
      const double gap = base.first - base.second;
      const double gap_wide = wide.first - wide.second;
      if (std::abs(numeric - central(narrow)) > kink_tol * scale ||
          std::abs(gap - gap_wide / 4) > asym_tol * scale + noise / h) {
        ++report.skipped_kinks;
        continue;
      }
      worst = std::max(worst, std::abs(numeric - analytic[ti][c]) / scale);
      ++report.checked;
    }
    report.max_error = std::max(report.max_error, worst);
  }
  return report;
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1, double hi = 1, bool grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<real> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = static_cast<real>(dist(rng));
  return Tensor::from(std::move(shape), std::move(v), grad);
}

}  // namespace robustsyn::testing
