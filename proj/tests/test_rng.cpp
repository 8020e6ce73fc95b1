#include <stdexcept>
#include <algorithm>
#include <cmath>
#include <doctest.h>

#include "qfl/rng.hpp"

using qfl::nd::RngStream;

TEST_CASE("identical seed and stream reproduce the same draws") {
  RngStream a(42, 7);
  RngStream b(42, 7);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

  RngStream c(42, 8);
  RngStream d(43, 7);
  bool all_equal_c = true, all_equal_d = true;
  RngStream a2(42, 7);
  for (int i = 0; i < 64; ++i) {
    const uint64_t v = a2.next_u64();
    all_equal_c &= (v == c.next_u64());
    all_equal_d &= (v == d.next_u64());
  }
  CHECK_FALSE(all_equal_c);
  CHECK_FALSE(all_equal_d);
}

TEST_CASE("counter blocks do not overlap") {
  RngStream base(1, 2, 0);
  RngStream block(1, 2, 1);
  bool any_equal = false;
  for (int i = 0; i < 64; ++i) any_equal |= (base.next_u64() == block.next_u64());
  CHECK_FALSE(any_equal);
}

TEST_CASE("gaussian moments match the law of large numbers") {
  RngStream rng(42, 0);
  const std::size_t n = 100000;
  const auto xs = rng.gaussian_array(n, 0.0f, 1.0f);
  double sum = 0.0;
  for (float x : xs) sum += x;
  const double mean = sum / n;
  double var = 0.0;
  for (float x : xs) var += (x - mean) * (x - mean);
  const double stddev = std::sqrt(var / n);
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(stddev - 1.0) < 0.02);
}

TEST_CASE("gaussian edge cases") {
  RngStream rng(1, 1);
  const auto xs = rng.gaussian_array(100, 3.5f, 0.0f);
  for (float x : xs) CHECK(x == 3.5f);
  CHECK_THROWS_AS(rng.gaussian(0.0, -1.0), std::invalid_argument);

  RngStream r1(9, 4), r2(9, 4);
  const auto a = r1.gaussian_array(64, 1.0f, 2.0f);
  const auto b = r2.gaussian_array(64, 1.0f, 2.0f);
  CHECK(a == b);
}

TEST_CASE("dirichlet draws lie on the simplex") {
  RngStream rng(42, 3);
  for (int trial = 0; trial < 10000; ++trial) {
    const double alpha = std::exp(rng.gaussian(0.0, 1.5));  // spans ~[0.05, 50]
    const std::size_t n = 1 + static_cast<std::size_t>(rng.below(30));
    const auto p = rng.dirichlet(alpha, n);
    REQUIRE(p.size() == n);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("dirichlet degenerate and parameter errors") {
  RngStream rng(5, 5);
  CHECK(rng.dirichlet(0.7, 1) == std::vector<double>{1.0});
  CHECK_THROWS_AS(rng.dirichlet(0.0, 4), std::invalid_argument);
  CHECK_THROWS_AS(rng.dirichlet(-1.0, 4), std::invalid_argument);
}

TEST_CASE("dirichlet concentration limits") {
  // alpha -> infinity: components concentrate at 1/n.
  RngStream rng(42, 6);
  const std::size_t n = 10;
  std::vector<double> mean(n, 0.0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto p = rng.dirichlet(1000.0, n);
    for (std::size_t k = 0; k < n; ++k) mean[k] += p[k];
  }
  for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(mean[k] / draws - 0.1) < 0.02);

  // alpha = 0.1: sparse draws, the max component dominates.
  double max_mean = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto p = rng.dirichlet(0.1, n);
    max_mean += *std::max_element(p.begin(), p.end());
  }
  CHECK(max_mean / 10000 > 0.5);
}

TEST_CASE("below is bounded and shuffle is deterministic") {
  RngStream rng(11, 0);
  for (int i = 0; i < 1000; ++i) CHECK(rng.below(7) < 7);

  std::vector<int> v1{1, 2, 3, 4, 5, 6, 7, 8};
  auto v2 = v1;
  RngStream s1(3, 3), s2(3, 3);
  s1.shuffle(v1);
  s2.shuffle(v2);
  CHECK(v1 == v2);
}
