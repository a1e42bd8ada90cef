#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "robustsyn/robust/objective.hpp"
#include "robustsyn/robust/perturbation.hpp"

namespace robustsyn {

enum class GradNormalization {
  l2,    // g / ||g||_2 per sample (steepest descent under L2)
  sign,  // sign(g)
  raw,   // g unchanged
};

std::string to_string(GradNormalization g);
GradNormalization parse_grad_normalization(const std::string& s);

struct PgdSchedule {
  int steps = 0;
  double step_size = 0.1;
  GradNormalization normalization = GradNormalization::l2;
  bool random_start = false;  // uniform start inside the ball
  std::uint64_t seed = 0;     // for random_start only

  void validate() const;
};

struct PgdResult {
  Tensor x;                         // [N, ...], detached
  std::vector<double> trace;        // objective value at iterate 0..steps_done
  std::vector<double> step_lengths;  // max per-sample L2 length of each pre-projection update
  int steps_done = 0;
  bool cancelled = false;
};

// Called after each iterate (step 0 is the projected start). Returning false
// stops the run; the result then has cancelled = true.
using PgdObserver = std::function<bool(int step, const Tensor& x, double value)>;

// Minimizes problem cost over the perturbation set:
//   x_0     = project(start)           (plus a uniform offset if random_start)
//   x_{t+1} = project(prox(x_t - step_size * normalize(grad smooth_cost(x_t))))
// A sample whose gradient is exactly zero takes no step. Throws NumericError
// naming the step when the objective or its gradient is not finite.
PgdResult pgd(const PgdProblem& problem, const PerturbationSet& set, const PgdSchedule& schedule, const Tensor& start,
              const PgdObserver& observer = {});

PgdResult pgd(const Classifier& model, const Objective& objective, const PerturbationSet& set,
              const PgdSchedule& schedule, const Tensor& start, const PgdObserver& observer = {},
              ops::BatchNormMode mode = ops::BatchNormMode::inference);

}  // namespace robustsyn
