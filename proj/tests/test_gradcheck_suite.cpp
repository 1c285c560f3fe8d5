// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "atmosconv/gradcheck.hpp"

using namespace atmosconv;

TEST_CASE("gradient suite verifies every operator against finite differences") {
  const std::vector<GradCheckEntry> entries = run_gradient_suite(1);
  REQUIRE(entries.size() == 5);
  for (const GradCheckEntry& e : entries) {
    CAPTURE(e.op);
    CHECK(e.probes >= 20);
    CHECK(e.worst_rel < 1e-4);
  }
}

TEST_CASE("gradient suite is seed-sensitive but stable per seed") {
  const auto a = run_gradient_suite(7);
  const auto b = run_gradient_suite(7);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].op == b[i].op);
    CHECK(a[i].worst_rel == b[i].worst_rel);
    CHECK(a[i].probes == b[i].probes);
  }
}
