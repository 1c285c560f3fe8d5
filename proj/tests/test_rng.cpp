// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "atmosconv/rng.hpp"

using atmosconv::Xoshiro256pp;

// Golden values frozen from an independent Python transcription of the
// published splitmix64 and xoshiro256++ reference code plus this project's
// stream-seeding convention. If these ever change, every corruption set and
// training run changes identity.
TEST_CASE("xoshiro golden sequence, seed 42 stream 0") {
  Xoshiro256pp g(42, 0);
  CHECK(g.next() == 0xefdb3abe2d004720ULL);
  CHECK(g.next() == 0x74285db8cad01896ULL);
  CHECK(g.next() == 0xe6026692c15933c2ULL);
  CHECK(g.next() == 0x3aa35cc5ec89ce4cULL);
}

TEST_CASE("xoshiro golden sequence, seed 42 stream 7") {
  Xoshiro256pp g(42, 7);
  CHECK(g.next() == 0x458b4913b99365b7ULL);
  CHECK(g.next() == 0xfaa30f160987cc95ULL);
  CHECK(g.uniform() == doctest::Approx(0.3022408783891348).epsilon(1e-15));
  CHECK(g.uniform() == doctest::Approx(0.8457429789699075).epsilon(1e-15));
  CHECK(g.uniform() == doctest::Approx(0.5954459177846537).epsilon(1e-15));
}

TEST_CASE("xoshiro golden values, other seeds") {
  Xoshiro256pp a(0, 0);
  CHECK(a.next() == 0x58f24f57e97e3f07ULL);
  Xoshiro256pp b(123456789, 1000);
  CHECK(b.uniform() == doctest::Approx(0.3596792305456178).epsilon(1e-15));
}

TEST_CASE("streams are independent and reproducible") {
  Xoshiro256pp a(7, 3), b(7, 3), c(7, 4);
  bool all_equal = true, any_diff = false;
  for (int i = 0; i < 64; ++i) {
    const auto va = a.next();
    all_equal = all_equal && (va == b.next());
    any_diff = any_diff || (va != c.next());
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("uniform stays in range") {
  Xoshiro256pp g(99, 0);
  for (int i = 0; i < 10000; ++i) {
    const double u = g.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  for (int i = 0; i < 10000; ++i) {
    const double u = g.uniform(-0.3, 0.3);
    CHECK(u >= -0.3);
    CHECK(u < 0.3);
  }
  for (int i = 0; i < 1000; ++i) {
    const auto v = g.below(10);
    CHECK(v < 10);
  }
}

TEST_CASE("below covers every bucket") {
  Xoshiro256pp g(5, 0);
  int counts[10] = {0};
  for (int i = 0; i < 5000; ++i) ++counts[g.below(10)];
  for (int k = 0; k < 10; ++k) CHECK(counts[k] > 0);
}
