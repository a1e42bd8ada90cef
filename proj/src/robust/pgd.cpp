#include "robustsyn/robust/pgd.hpp"

#include <cmath>
#include <random>

namespace robustsyn {

std::string to_string(GradNormalization g) {
  switch (g) {
    case GradNormalization::l2:
      return "l2";
    case GradNormalization::sign:
      return "sign";
    case GradNormalization::raw:
      return "raw";
  }
  return "?";
}

GradNormalization parse_grad_normalization(const std::string& s) {
  if (s == "l2") return GradNormalization::l2;
  if (s == "sign") return GradNormalization::sign;
  if (s == "raw") return GradNormalization::raw;
  throw InvalidArgument("unknown gradient normalization '" + s + "' (expected l2, sign or raw)");
}

void PgdSchedule::validate() const {
  if (steps < 0) throw InvalidArgument("PGD steps must be >= 0");
  if (!std::isfinite(step_size) || step_size <= 0) throw InvalidArgument("PGD step size must be finite and > 0");
}

namespace {

void random_offset(const PerturbationSet& set, std::span<real> x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto d = static_cast<std::size_t>(set.sample_size());
  const double eps = set.epsilon();
  for (std::int64_t n = 0; n < set.batch(); ++n) {
    auto s = x.subspan(static_cast<std::size_t>(n) * d, d);
    if (set.norm() == Norm::linf) {
      std::uniform_real_distribution<double> u(-eps, eps);
      for (auto& v : s) v = static_cast<real>(v + u(rng));
      continue;
    }
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> dir(d);
    double sq = 0;
    for (auto& v : dir) {
      v = g(rng);
      sq += v * v;
    }
    const double radius = eps * std::pow(std::uniform_real_distribution<double>(0, 1)(rng), 1.0 / static_cast<double>(d));
    const double f = sq > 0 ? radius / std::sqrt(sq) : 0.0;
    for (std::size_t i = 0; i < d; ++i) s[i] = static_cast<real>(s[i] + dir[i] * f);
  }
}

}  // namespace

PgdResult pgd(const PgdProblem& problem, const PerturbationSet& set, const PgdSchedule& schedule, const Tensor& start,
              const PgdObserver& observer) {
  schedule.validate();
  if (!problem.smooth_cost) throw InvalidArgument("PGD problem has no cost function");
  if (start.shape() != set.anchor().shape()) {
    throw ShapeError("PGD start " + shape_str(start.shape()) + " does not match anchor " + shape_str(set.anchor().shape()));
  }
  const std::int64_t batch = start.dim(0);
  const auto d = static_cast<std::size_t>(start.numel() / batch);

  Tensor x = start.detach();
  if (schedule.random_start && set.epsilon() > 0) random_offset(set, x.mutable_data(), schedule.seed);
  set.project(x.mutable_data());

  PgdResult result;
  std::vector<double> gnorm(static_cast<std::size_t>(batch)), t_eff(static_cast<std::size_t>(batch));
  for (int step = 0;; ++step) {
    const bool last = step == schedule.steps;
    Tensor xv = x.detach();
    xv.set_requires_grad(!last);
    Tensor cost;
    try {
      cost = problem.smooth_cost(xv);
    } catch (const NumericError& e) {
      throw NumericError("PGD step " + std::to_string(step) + ": non-finite objective (" + e.what() + ")");
    }
    double total = cost.item();
    if (problem.prox) total += problem.prox->value(x.data());
    const double value = problem.value_sign * total;
    if (!std::isfinite(value)) throw NumericError("PGD step " + std::to_string(step) + ": non-finite objective");
    result.trace.push_back(value);
    result.steps_done = step;
    if (observer && !observer(step, x, value)) {
      result.cancelled = true;
      break;
    }
    if (last) break;

    std::vector<real> g(x.data().size(), 0);
    if (cost.requires_grad()) {
      try {
        cost.backward();
      } catch (const NumericError& e) {
        throw NumericError("PGD step " + std::to_string(step) + ": non-finite gradient (" + e.what() + ")");
      }
      if (xv.has_grad()) g.assign(xv.grad().begin(), xv.grad().end());
    }

    auto xd = x.mutable_data();
    double max_len = 0;
    for (std::int64_t n = 0; n < batch; ++n) {
      const std::size_t begin = static_cast<std::size_t>(n) * d, end = begin + d;
      double sq = 0;
      std::size_t nonzero = 0;
      for (std::size_t i = begin; i < end; ++i) {
        sq += static_cast<double>(g[i]) * g[i];
        nonzero += g[i] != 0;
      }
      const double norm = std::sqrt(sq);
      gnorm[static_cast<std::size_t>(n)] = norm;
      if (norm == 0) {
        t_eff[static_cast<std::size_t>(n)] = 0;
        continue;
      }
      double factor = 0;  // update = -factor * g (or sign(g) scaled)
      switch (schedule.normalization) {
        case GradNormalization::l2:
          factor = schedule.step_size / norm;
          t_eff[static_cast<std::size_t>(n)] = factor;
          break;
        case GradNormalization::raw:
          factor = schedule.step_size;
          t_eff[static_cast<std::size_t>(n)] = factor;
          break;
        case GradNormalization::sign:
          t_eff[static_cast<std::size_t>(n)] = schedule.step_size * std::sqrt(static_cast<double>(nonzero)) / norm;
          break;
      }
      double len_sq = 0;
      for (std::size_t i = begin; i < end; ++i) {
        const double upd = schedule.normalization == GradNormalization::sign
                               ? (g[i] > 0 ? -schedule.step_size : (g[i] < 0 ? schedule.step_size : 0.0))
                               : -factor * g[i];
        const real before = xd[i];
        xd[i] = static_cast<real>(before + upd);
        const double moved = static_cast<double>(xd[i]) - before;
        len_sq += moved * moved;
      }
      max_len = std::max(max_len, std::sqrt(len_sq));
    }
    result.step_lengths.push_back(max_len);
    if (problem.prox) problem.prox->apply(xd, t_eff);
    set.project(xd);
  }
  result.x = x;
  return result;
}

PgdResult pgd(const Classifier& model, const Objective& objective, const PerturbationSet& set,
              const PgdSchedule& schedule, const Tensor& start, const PgdObserver& observer, ops::BatchNormMode mode) {
  return pgd(compile_objective(model, objective, mode), set, schedule, start, observer);
}

}  // namespace robustsyn
