#include "robustsyn/robust/objective.hpp"

#include <cmath>

namespace robustsyn {

ObjectiveTerm ObjectiveTerm::class_loss(std::vector<int> targets, double weight) {
  ObjectiveTerm t;
  t.kind = Kind::class_loss;
  t.targets = std::move(targets);
  t.weight = weight;
  return t;
}

ObjectiveTerm ObjectiveTerm::class_logit(std::vector<int> targets, double weight) {
  ObjectiveTerm t = class_loss(std::move(targets), weight);
  t.kind = Kind::class_logit;
  return t;
}

ObjectiveTerm ObjectiveTerm::feature(std::vector<int> features, double weight) {
  ObjectiveTerm t = class_loss(std::move(features), weight);
  t.kind = Kind::feature;
  return t;
}

ObjectiveTerm ObjectiveTerm::masked_l2(Tensor anchor, Tensor mask_weight, double weight) {
  ObjectiveTerm t;
  t.kind = Kind::masked_l2;
  t.anchor = anchor.detach();
  t.mask_weight = mask_weight.detach();
  t.weight = weight;
  return t;
}

std::string to_string(ObjectiveTerm::Kind k) {
  switch (k) {
    case ObjectiveTerm::Kind::class_loss:
      return "class_loss";
    case ObjectiveTerm::Kind::class_logit:
      return "class_logit";
    case ObjectiveTerm::Kind::feature:
      return "feature";
    case ObjectiveTerm::Kind::masked_l2:
      return "masked_l2";
  }
  return "?";
}

double ProxPenalty::value(std::span<const real> x) const {
  const auto n = anchor.dim(0);
  const auto d = static_cast<std::size_t>(anchor.numel() / n);
  auto a = anchor.data();
  auto w = mask_weight.data();
  double total = 0;
  for (std::int64_t s = 0; s < n; ++s) {
    double sq = 0;
    for (std::size_t i = static_cast<std::size_t>(s) * d; i < static_cast<std::size_t>(s + 1) * d; ++i) {
      const double v = (static_cast<double>(x[i]) - a[i]) * w[i];
      sq += v * v;
    }
    total += std::sqrt(sq);
  }
  return coefficient * total;
}

void ProxPenalty::apply(std::span<real> x, std::span<const double> t) const {
  const auto n = anchor.dim(0);
  const auto d = static_cast<std::size_t>(anchor.numel() / n);
  auto a = anchor.data();
  auto w = mask_weight.data();
  for (std::int64_t s = 0; s < n; ++s) {
    const std::size_t begin = static_cast<std::size_t>(s) * d, end = begin + d;
    double sq = 0;
    for (std::size_t i = begin; i < end; ++i) {
      if (w[i] != 0) {
        const double v = static_cast<double>(x[i]) - a[i];
        sq += v * v;
      }
    }
    const double norm = std::sqrt(sq);
    const double threshold = t[static_cast<std::size_t>(s)] * coefficient;
    const double keep = norm <= threshold ? 0.0 : 1.0 - threshold / norm;
    for (std::size_t i = begin; i < end; ++i) {
      if (w[i] != 0) x[i] = static_cast<real>(a[i] + (static_cast<double>(x[i]) - a[i]) * keep);
    }
  }
}

namespace {

std::vector<int> expand_targets(const std::vector<int>& targets, std::int64_t n, const char* what) {
  if (targets.size() == 1) return std::vector<int>(static_cast<std::size_t>(n), targets[0]);
  if (static_cast<std::int64_t>(targets.size()) != n) {
    throw ShapeError(std::string(what) + ": expected 1 or " + std::to_string(n) + " targets, got " +
                     std::to_string(targets.size()));
  }
  return targets;
}

bool is_binary(const Tensor& t) {
  for (real v : t.data())
    if (v != 0 && v != 1) return false;
  return true;
}

bool needs_model(const Objective& o) {
  for (const auto& t : o.terms)
    if (t.kind != ObjectiveTerm::Kind::masked_l2) return true;
  return false;
}

}  // namespace

PgdProblem compile_objective(const Classifier& model, const Objective& objective, ops::BatchNormMode mode) {
  if (objective.terms.empty()) throw InvalidArgument("objective has no terms");
  const double sign = objective.direction == Direction::minimize ? 1.0 : -1.0;
  PgdProblem problem;
  problem.value_sign = sign;

  std::vector<ObjectiveTerm> smooth;
  for (const auto& term : objective.terms) {
    if (!std::isfinite(term.weight)) throw InvalidArgument("objective term weight must be finite");
    if (term.kind == ObjectiveTerm::Kind::masked_l2) {
      if (!term.anchor.defined() || !term.mask_weight.defined() || term.anchor.shape() != term.mask_weight.shape()) {
        throw ShapeError("masked_l2 term needs an anchor and a weight of the same shape");
      }
      const double coefficient = sign * term.weight;
      if (objective.proximal_penalty && !problem.prox && coefficient > 0 && is_binary(term.mask_weight)) {
        problem.prox = ProxPenalty{term.anchor, term.mask_weight, coefficient};
        continue;
      }
    } else if (term.targets.empty()) {
      throw InvalidArgument(to_string(term.kind) + " term needs a target index");
    }
    if (term.kind == ObjectiveTerm::Kind::feature) {
      for (int f : term.targets) {
        if (f < 0 || f >= model.spec().representation_width()) {
          throw InvalidArgument("feature index " + std::to_string(f) + " out of range [0, " +
                                std::to_string(model.spec().representation_width()) + ")");
        }
      }
    }
    if (term.kind == ObjectiveTerm::Kind::class_loss || term.kind == ObjectiveTerm::Kind::class_logit) {
      for (int y : term.targets) {
        if (y < 0 || y >= model.spec().num_classes) {
          throw InvalidArgument("class index " + std::to_string(y) + " out of range [0, " +
                                std::to_string(model.spec().num_classes) + ")");
        }
      }
    }
    smooth.push_back(term);
  }
  const bool use_model = needs_model(objective);
  const Classifier* m = &model;
  problem.smooth_cost = [m, smooth = std::move(smooth), sign, mode, use_model](const Tensor& x) {
    const std::int64_t n = x.dim(0);
    Classifier::Output out;
    if (use_model) out = m->forward(x, mode);
    Tensor cost;
    for (const auto& term : smooth) {
      Tensor v;
      switch (term.kind) {
        case ObjectiveTerm::Kind::class_loss: {
          auto ys = expand_targets(term.targets, n, "class_loss");
          v = ops::softmax_cross_entropy(out.logits, ys, ops::Reduction::sum);
          break;
        }
        case ObjectiveTerm::Kind::class_logit: {
          auto ys = expand_targets(term.targets, n, "class_logit");
          v = ops::sum(ops::select(out.logits, ys));
          break;
        }
        case ObjectiveTerm::Kind::feature: {
          auto fs = expand_targets(term.targets, n, "feature");
          v = ops::sum(ops::select(out.representation, fs));
          break;
        }
        case ObjectiveTerm::Kind::masked_l2:
          v = ops::sum(ops::masked_l2(x, term.anchor, term.mask_weight));
          break;
      }
      v = ops::scale(v, static_cast<real>(sign * term.weight));
      cost = cost.defined() ? ops::add(cost, v) : v;
    }
    if (!cost.defined()) cost = Tensor::scalar(0);
    return cost;
  };
  return problem;
}

double evaluate_objective(const Classifier& model, const Objective& objective, const Tensor& x,
                          ops::BatchNormMode mode) {
  PgdProblem p = compile_objective(model, objective, mode);
  double cost = p.smooth_cost(x.detach()).item();
  if (p.prox) cost += p.prox->value(x.data());
  return p.value_sign * cost;
}

}  // namespace robustsyn
