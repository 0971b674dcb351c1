#pragma once

// Best-of-K policy: draw K responses, keep the highest-reward one.
//
// For K i.i.d. draws from p with rewards bounded by B,
//   E[r] <= E[max_i r_i] <= E[r] + sqrt(B^2 / 2 * log K).

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "raftlab/policy.hpp"
#include "raftlab/reward.hpp"

namespace raftlab {

struct BestOfKDraw {
  ResponseId response = 0;
  double reward = 0.0;
};

/// Argmax-reward draw among K temperature-lambda samples; ties go to the
/// lowest sample index.
BestOfKDraw best_of_k_sample(const Policy& policy, const RewardFn& reward, PromptId x,
                             std::size_t k, double temperature, std::uint64_t seed);

/// E[max of K i.i.d. rewards] for an explicit discrete distribution, using the
/// order-statistic identity sum_i r_(i) (F(r_(i))^K - F(r_(i-1))^K) over the
/// sorted distinct reward values. K = 1 returns the mean.
double expected_max_of_k(std::span<const double> probabilities, std::span<const double> rewards,
                         std::size_t k);

/// Exact E[best-of-K reward] for prompt x at temperature lambda.
double expected_best_of_k_exact(const Policy& policy, const RewardFn& reward, PromptId x,
                                std::size_t k, double temperature,
                                std::uint64_t cap = kDefaultEnumerationCap);

struct BestOfKReport {
  PromptId prompt = 0;
  std::size_t k = 1;
  double mean = 0.0;
  double expected_best = 0.0;
  double bound = 0.0;
  /// bound - expected_best.
  double slack = 0.0;
};

/// Upper envelope mean + sqrt(B^2 / 2 * log K).
double best_of_k_bound(double mean, double reward_bound, std::size_t k);

/// Relative rounding allowance used when asserting the two inequalities.
inline constexpr double kBoundTolerance = 1e-12;

/// Evaluates both sides at temperature 1 and throws std::logic_error when
/// either inequality fails.
BestOfKReport bound_check(const Policy& policy, const RewardFn& reward, PromptId x,
                          std::size_t k, double reward_bound);
/// As above with B = reward.bound().
BestOfKReport bound_check(const Policy& policy, const RewardFn& reward, PromptId x,
                          std::size_t k);

/// CSV with columns x,K,mean,exact_bok,bound,slack.
void write_bound_csv(std::ostream& out, std::span<const BestOfKReport> reports);

}  // namespace raftlab
