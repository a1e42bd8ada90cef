// Finite-difference agreement for every op kind and for small classifiers.
// Built twice: against the 32-bit engine and the 64-bit test-mode engine.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "gradcheck_suite.hpp"

using namespace robustsyn;
using namespace robustsyn::testing;

TEST_CASE("every op kind matches central finite differences") {
  auto results = run_op_suite();
  CHECK(results.size() * 8 >= 100);
  for (const auto& r : results) {
    INFO(r.name << " worst=" << r.worst << " checked=" << r.checked << " kinks=" << r.kinks);
    CHECK(r.worst < kTolerance);
    CHECK(r.checked > 0);
    CHECK(r.kinks <= r.checked / 4);
  }
}

TEST_CASE("random small classifiers: input and parameter gradients") {
  for (const auto& c : run_classifier_suite()) {
    INFO("classifier seed=" << c.seed << " worst=" << c.report.max_error << " checked=" << c.report.checked
                            << " kinks=" << c.report.skipped_kinks);
    CHECK(c.report.max_error < kTolerance);
    CHECK(c.report.skipped_kinks <= c.report.checked / 2);
  }
}
