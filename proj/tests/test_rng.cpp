#include <doctest.h>

#include <cmath>

#include "vntpp/rng.hpp"

using vntpp::CounterRng;

TEST_CASE("same seed reproduces the stream") {
  CounterRng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("streams with different ids diverge") {
  CounterRng a(42, 0), b(42, 1);
  int equal = 0;
  for (int i = 0; i < 100; ++i)
    if (a.next_u64() == b.next_u64()) ++equal;
  CHECK(equal == 0);
}

TEST_CASE("uniform stays in [0,1) and is roughly uniform") {
  CounterRng rng(7);
  double sum = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
  }
  CHECK(sum / 20000 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("normal has unit moments") {
  CounterRng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(0.02));
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("exponential has the requested mean") {
  CounterRng rng(13);
  double sum = 0.0;
  const int n = 50000;
  for (int i = 0; i < n; ++i) sum += rng.exponential(2.0);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("uniform_int covers the range without bias") {
  CounterRng rng(17);
  int counts[5] = {0, 0, 0, 0, 0};
  for (int i = 0; i < 50000; ++i) ++counts[rng.uniform_int(5)];
  for (int c : counts) CHECK(c == doctest::Approx(10000).epsilon(0.05));
}
