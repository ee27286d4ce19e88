#include <doctest.h>

#include <set>

#include "mfhi/rng.hpp"

using mfhi::Rng;

TEST_CASE("identical seeds give identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
}

TEST_CASE("different seeds diverge") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i)
    if (a.next() == b.next()) ++same;
  CHECK(same == 0);
}

TEST_CASE("uniform stays in [0,1)") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("bounded draws cover the range") {
  Rng rng(3);
  std::set<uint32_t> seen;
  for (int i = 0; i < 500; ++i) seen.insert(rng.uniform_u32(7));
  CHECK(seen.size() == 7);
  for (uint32_t v : seen) CHECK(v < 7);
}

TEST_CASE("sample_without_replacement yields distinct indices") {
  Rng rng(11);
  const auto picks = rng.sample_without_replacement(10, 6);
  CHECK(picks.size() == 6);
  std::set<int> unique(picks.begin(), picks.end());
  CHECK(unique.size() == 6);
  for (int p : picks) {
    CHECK(p >= 0);
    CHECK(p < 10);
  }
}

TEST_CASE("serialize round-trips the exact state") {
  Rng rng(99);
  for (int i = 0; i < 17; ++i) rng.next();
  Rng copy = Rng::deserialize(rng.serialize());
  for (int i = 0; i < 50; ++i) CHECK(copy.next() == rng.next());
}

TEST_CASE("forks are independent of parent consumption") {
  Rng a(5);
  Rng fork_before = a.fork(1);
  a.next();
  a.next();
  Rng fork_after = a.fork(1);
  for (int i = 0; i < 10; ++i) CHECK(fork_before.next() == fork_after.next());
}

TEST_CASE("normal has roughly standard moments") {
  Rng rng(123);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.05);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}
