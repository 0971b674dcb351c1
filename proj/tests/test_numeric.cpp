#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "oracle.hpp"
#include "raftlab/error.hpp"
#include "raftlab/numeric.hpp"
#include "raftlab/random.hpp"

using namespace raftlab;

TEST_CASE("sigmoid and log_sigmoid stay finite at the extremes") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(1000.0) == 1.0);
  CHECK(sigmoid(-1000.0) == 0.0);
  CHECK(log_sigmoid(-1000.0) == doctest::Approx(-1000.0));
  CHECK(log_sigmoid(10.0) == doctest::Approx(-4.539889921686465e-05).epsilon(1e-12));
}

TEST_CASE("softmax matches the closed form") {
  const std::vector<double> z{1.0, 2.0};
  const auto p = softmax(z);
  CHECK(p[0] == doctest::Approx(1.0 / (1.0 + std::exp(1.0))).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-15));

  const std::vector<double> w{-3.0, 0.5, 2.0, 7.0};
  const auto q = softmax(w, 0.7);
  const auto ref = oracle::softmax(w, 0.7);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(q[i] == doctest::Approx(ref[i]).epsilon(1e-14));
}

TEST_CASE("log_sum_exp survives huge logits") {
  const std::vector<double> z{1000.0, 1000.0};
  CHECK(log_sum_exp(z) == doctest::Approx(1000.0 + std::log(2.0)));
}

TEST_CASE("pairwise_sum is exact on small integers") {
  std::vector<double> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(i);
  CHECK(pairwise_sum(v) == 499500.0);
  CHECK(pairwise_sum(std::vector<double>{}) == 0.0);
}

TEST_CASE("format_double round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345.678, 0.0}) {
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(std::isinf(parse_double("inf")));
  CHECK_THROWS_AS(parse_double("1.5x"), FormatError);
  CHECK_THROWS_AS(parse_double(""), FormatError);
}

TEST_CASE("derived seeds separate streams") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 20; ++a) {
    for (std::uint64_t b = 0; b < 20; ++b) seen.insert(derive_seed({a, b}));
  }
  CHECK(seen.size() == 400);
  CHECK(derive_seed({1, 2}) != derive_seed({2, 1}));
  CHECK(derive_seed({7, 7}) == derive_seed({7, 7}));
}

TEST_CASE("uniform_index is unbiased for a small range") {
  Rng rng(3);
  std::vector<std::size_t> counts(3, 0);
  const std::size_t n = 90000;
  for (std::size_t i = 0; i < n; ++i) ++counts[uniform_index(rng, 3)];
  for (auto c : counts) CHECK(oracle::within_binomial(c, n, 1.0 / 3.0));
}

TEST_CASE("draw_from_cdf skips zero-mass entries") {
  const std::vector<double> cdf{0.0, 0.5, 0.5, 1.0};
  CHECK(draw_from_cdf(cdf, 0.0) == 1);
  CHECK(draw_from_cdf(cdf, 0.49) == 1);
  CHECK(draw_from_cdf(cdf, 0.5) == 3);
  CHECK(draw_from_cdf(cdf, 0.999) == 3);
}
