// Runs the finite-difference suites against the 64-bit engine and prints one
// summary line. Invoked by the acceptance runner as a child process because
// the two precisions cannot share an executable.

#include <cstdio>

#include "gradcheck_suite.hpp"

int main() {
  using namespace robustsyn::testing;
  double worst = 0;
  int checked = 0, kinks = 0;
  bool ok = true;
  for (const auto& r : run_op_suite()) {
    if (!r.ok()) {
      std::printf("op %s worst=%.3g checked=%d kinks=%d\n", r.name.c_str(), r.worst, r.checked, r.kinks);
      ok = false;
    }
    worst = std::max(worst, r.worst);
    checked += r.checked;
    kinks += r.kinks;
  }
  for (const auto& c : run_classifier_suite()) {
    if (!c.ok()) {
      std::printf("classifier %llu worst=%.3g\n", static_cast<unsigned long long>(c.seed), c.report.max_error);
      ok = false;
    }
    worst = std::max(worst, c.report.max_error);
    checked += c.report.checked;
    kinks += c.report.skipped_kinks;
  }
  std::printf("f64 worst=%.3g (tol %.0e) checked=%d kinks=%d\n", worst, kTolerance, checked, kinks);
  return ok ? 0 : 1;
}
