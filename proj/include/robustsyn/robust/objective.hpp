#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "robustsyn/models/classifier.hpp"

namespace robustsyn {

enum class Direction { minimize, maximize };

// One weighted term of a per-sample objective, summed over the batch.
//
//   class_loss     softmax cross-entropy of the target class
//   class_logit    logit of the target class
//   feature        representation activation R(x)_f
//   masked_l2      ||(x - anchor) * weight||_2 per sample
//
// `targets` holds one class or feature index per sample, or a single index
// shared by the whole batch.
struct ObjectiveTerm {
  enum class Kind { class_loss, class_logit, feature, masked_l2 };
  Kind kind = Kind::class_loss;
  double weight = 1.0;
  std::vector<int> targets;
  Tensor anchor;      // masked_l2 only, [N, C, H, W]
  Tensor mask_weight;  // masked_l2 only, same shape as anchor

  static ObjectiveTerm class_loss(std::vector<int> targets, double weight = 1.0);
  static ObjectiveTerm class_logit(std::vector<int> targets, double weight = 1.0);
  static ObjectiveTerm feature(std::vector<int> features, double weight = 1.0);
  static ObjectiveTerm masked_l2(Tensor anchor, Tensor mask_weight, double weight);
};

std::string to_string(ObjectiveTerm::Kind k);

struct Objective {
  Direction direction = Direction::minimize;
  std::vector<ObjectiveTerm> terms;
  // When set, a binary-weighted masked_l2 term that enters the cost with a
  // positive coefficient is applied as a proximal step after each gradient
  // step instead of being differentiated. Other terms are always
  // differentiated.
  bool proximal_penalty = true;
};

// Group-sparse penalty c * ||(x - anchor) * w||_2 per sample with binary w,
// handled by its proximal operator.
struct ProxPenalty {
  Tensor anchor;
  Tensor mask_weight;
  double coefficient = 0;  // > 0, as it appears in the cost being minimized

  // Value summed over the batch.
  double value(std::span<const real> x) const;
  // In place: x <- prox_{t * coefficient * ||.||}(x), t per sample.
  void apply(std::span<real> x, std::span<const double> t) const;
};

// A problem in the form pgd() minimizes:
//   cost(x) = smooth_cost(x) + prox(x)
// and reports objective value = value_sign * cost(x) in the trace.
struct PgdProblem {
  std::function<Tensor(const Tensor&)> smooth_cost;
  std::optional<ProxPenalty> prox;
  double value_sign = 1.0;
};

// Compiles an objective for a fixed model. The classifier is evaluated with
// batch-norm in the given mode (inference for synthesis).
PgdProblem compile_objective(const Classifier& model, const Objective& objective,
                             ops::BatchNormMode mode = ops::BatchNormMode::inference);

// Evaluates the objective value (not the cost) summed over the batch.
double evaluate_objective(const Classifier& model, const Objective& objective, const Tensor& x,
                          ops::BatchNormMode mode = ops::BatchNormMode::inference);

}  // namespace robustsyn
