#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracle.hpp"
#include "raftlab/bestofk.hpp"
#include "raftlab/error.hpp"

using namespace raftlab;

TEST_CASE("Bernoulli rewards with K = 2") {
  const std::vector<double> p{0.5, 0.5}, r{0.0, 1.0};
  CHECK(expected_max_of_k(p, r, 2) == 0.75);
  CHECK(oracle::brute_force_max(p, r, 2) == 0.75);
  const Policy pol = BanditPolicy(1, 2);
  const RewardTable table(1, 2, r, 1.0);
  const auto rep = bound_check(pol, table, 0, 2);
  CHECK(rep.expected_best == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(rep.bound == doctest::Approx(0.5 + std::sqrt(0.5 * std::log(2.0))).epsilon(1e-15));
  CHECK(rep.bound == doctest::Approx(1.089).epsilon(1e-3));
  CHECK(rep.slack > 0.0);
}

TEST_CASE("order-statistic identity matches brute force") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 2 + trial % 4;
    std::vector<double> p(n), r(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += p[i] = u(rng);
    for (double& v : p) v /= total;
    for (double& v : r) v = std::floor(4 * u(rng)) / 4;  // forces ties
    for (int k = 1; k <= 4; ++k) {
      CHECK(expected_max_of_k(p, r, k) == doctest::Approx(oracle::brute_force_max(p, r, k)).epsilon(1e-12));
    }
  }
}

TEST_CASE("K = 1 is the mean and the bound is tight") {
  const Policy pol = BanditPolicy(1, 3, {0.2, -0.4, 1.0});
  const RewardTable table(1, 3, {0.1, 0.7, 0.3}, 1.0);
  const auto rep = bound_check(pol, table, 0, 1);
  CHECK(rep.expected_best == rep.mean);
  CHECK(rep.bound == rep.mean);
  CHECK(rep.slack == 0.0);
}

TEST_CASE("best-of-K is nondecreasing in K and capped by the support max") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0, 2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> logits(9), rewards(9);
    for (double& v : logits) v = g(rng);
    for (double& v : rewards) v = u(rng);
    const Policy pol = BanditPolicy(1, 9, logits);
    const RewardTable table(1, 9, rewards, 1.0);
    const double rmax = *std::max_element(rewards.begin(), rewards.end());
    double previous = -1;
    for (std::size_t k = 1; k <= 64; ++k) {
      const double e = expected_best_of_k_exact(pol, table, 0, k, 1.0);
      CHECK(e >= previous);
      CHECK(e <= rmax);
      previous = e;
    }
  }
}

TEST_CASE("sampled best-of-K agrees with the exact value") {
  const Policy pol = BanditPolicy(1, 5, {0.5, -1.0, 0.0, 2.0, -0.5});
  const RewardTable table(1, 5, {0.9, 0.1, 0.6, 0.2, 1.0}, 1.0);
  const std::size_t k = 4, trials = 100000;
  std::vector<double> v(trials);
  for (std::size_t i = 0; i < trials; ++i) v[i] = best_of_k_sample(pol, table, 0, k, 1.0, 1000 + i).reward;
  const double mu = oracle::mean(v);
  double var = 0;
  for (double x : v) var += (x - mu) * (x - mu);
  const double se = std::sqrt(var / (trials - 1) / trials);
  CHECK(std::abs(mu - expected_best_of_k_exact(pol, table, 0, k, 1.0)) <= 3 * se);
}

TEST_CASE("best_of_k_sample edge cases") {
  const Policy pol = BanditPolicy(1, 3, {0.0, 0.0, 0.0});
  const RewardTable table(1, 3, {0.3, 0.3, 0.3}, 1.0);
  // Ties go to the first sample.
  const auto draw = best_of_k_sample(pol, table, 0, 5, 1.0, 8);
  const auto first = sample_responses(pol, 0, {1.0, 5, 8}).front();
  CHECK(draw.response == first);
  const auto single = best_of_k_sample(pol, table, 0, 1, 1.0, 8);
  CHECK(single.response == first);

  const Policy peaked = BanditPolicy(1, 3, {-800.0, 800.0, -800.0});
  const RewardTable skew(1, 3, {1.0, 0.0, 1.0}, 1.0);
  for (std::size_t k : {1, 8, 64}) CHECK(best_of_k_sample(peaked, skew, 0, k, 1.0, 3).response == 1);
  CHECK_THROWS_AS(best_of_k_sample(pol, table, 0, 0, 1.0, 1), ConfigError);
}

TEST_CASE("bound CSV layout") {
  const std::vector<BestOfKReport> rows{{0, 2, 0.5, 0.75, 1.0, 0.25}};
  std::ostringstream out;
  write_bound_csv(out, rows);
  CHECK(out.str() == "x,K,mean,exact_bok,bound,slack\n0,2,0.5,0.75,1,0.25\n");
}
