#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "greytune/common.hpp"

using namespace greytune;

TEST_CASE("rng is deterministic per seed") {
  Rng a(42), b(42), c(43);
  bool all_equal = true;
  bool any_differ = false;
  for (int i = 0; i < 100; ++i) {
    const auto xa = a.u64();
    all_equal = all_equal && xa == b.u64();
    any_differ = any_differ || xa != c.u64();
  }
  CHECK(all_equal);
  CHECK(any_differ);
}

TEST_CASE("real01 stays in the half-open unit interval") {
  Rng rng(7);
  double lo = 1.0, hi = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double x = rng.real01();
    REQUIRE(x >= 0.0);
    REQUIRE(x < 1.0);
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  CHECK(lo < 0.01);
  CHECK(hi > 0.99);
}

TEST_CASE("index covers its range without bias") {
  Rng rng(11);
  int counts[5] = {};
  for (int i = 0; i < 50000; ++i) counts[rng.index(5)]++;
  for (int c : counts) {
    CHECK(c > 9000);
    CHECK(c < 11000);
  }
  CHECK_THROWS(rng.index(0));
}

TEST_CASE("normal draws have roughly standard moments") {
  Rng rng(3);
  double sum = 0.0, sumsq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sumsq += z * z;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("fork decorrelates by label") {
  Rng a(5), b(5);
  Rng fa = a.fork("alpha");
  Rng fb = b.fork("alpha");
  CHECK(fa.u64() == fb.u64());
  Rng c(5);
  Rng fc = c.fork("beta");
  Rng d(5);
  CHECK(fc.u64() != d.fork("alpha").u64());
}

TEST_CASE("fnv1a64 matches reference digests") {
  // Reference values for the canonical 64-bit FNV-1a parameters.
  CHECK(fnv1a64("") == 0xcbf29ce484222325ull);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ull);
}

TEST_CASE("binary round trip preserves bits") {
  std::stringstream ss;
  bin::write_u64(ss, 0x0123456789abcdefull);
  bin::write_f64(ss, -0.1);
  bin::write_f64(ss, std::numeric_limits<double>::infinity());
  bin::write_str(ss, "hello\nworld");
  CHECK(bin::read_u64(ss) == 0x0123456789abcdefull);
  CHECK(bin::read_f64(ss) == -0.1);
  CHECK(std::isinf(bin::read_f64(ss)));
  CHECK(bin::read_str(ss) == "hello\nworld");
  CHECK_THROWS_AS(bin::read_u64(ss), DataError);
}

TEST_CASE("format_double round trips exactly") {
  for (double v : {0.0, 1.0, -0.1, 0.3333333333333333, 1e-300, 12345.6789,
                   0.1 + 0.2}) {
    const std::string s = format_double(v);
    CHECK(std::stod(s) == v);
  }
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("shuffle permutes deterministically") {
  std::vector<int> v{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<int> w = v;
  Rng a(9), b(9);
  a.shuffle(v);
  b.shuffle(w);
  CHECK(v == w);
  std::multiset<int> got(v.begin(), v.end());
  std::multiset<int> want{1, 2, 3, 4, 5, 6, 7, 8};
  CHECK(got == want);
}
