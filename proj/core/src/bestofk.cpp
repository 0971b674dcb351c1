#include "raftlab/bestofk.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "raftlab/error.hpp"
#include "raftlab/numeric.hpp"

namespace raftlab {

BestOfKDraw best_of_k_sample(const Policy& policy, const RewardFn& reward, PromptId x,
                             std::size_t k, double temperature, std::uint64_t seed) {
  const auto ys = sample_responses(policy, x, SamplingConfig{temperature, k, seed});
  BestOfKDraw best{ys[0], reward.score(x, ys[0])};
  for (std::size_t j = 1; j < ys.size(); ++j) {
    const double r = reward.score(x, ys[j]);
    if (r > best.reward) best = {ys[j], r};
  }
  return best;
}

double expected_max_of_k(std::span<const double> probabilities, std::span<const double> rewards,
                         std::size_t k) {
  if (k == 0) throw ConfigError("K must be at least 1");
  if (probabilities.size() != rewards.size() || rewards.empty()) {
    throw DomainError("probability and reward vectors must be nonempty and equally long");
  }
  std::vector<double> weighted(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) weighted[i] = probabilities[i] * rewards[i];
  const double mean = pairwise_sum(weighted);
  if (k == 1) return mean;

  std::vector<std::size_t> order(rewards.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rewards[a] < rewards[b]; });

  // Collapse equal rewards into distinct levels with their cumulative mass.
  std::vector<double> level;
  std::vector<double> cdf;
  double acc = 0.0;
  for (std::size_t idx : order) {
    acc += probabilities[idx];
    if (!level.empty() && rewards[idx] == level.back()) {
      cdf.back() = acc;
    } else {
      level.push_back(rewards[idx]);
      cdf.push_back(acc);
    }
  }
  const double total = acc;

  // Tail-sum form r_max - sum_i (r_(i+1) - r_(i)) F_i^K of the same identity;
  // every term is nonnegative and shrinks as K grows.
  double tail = 0.0;
  for (std::size_t i = 0; i + 1 < level.size(); ++i) {
    const double f = std::min(cdf[i] / total, 1.0);
    tail += (level[i + 1] - level[i]) * std::pow(f, static_cast<double>(k));
  }
  return level.back() - tail;
}

double expected_best_of_k_exact(const Policy& policy, const RewardFn& reward, PromptId x,
                                std::size_t k, double temperature, std::uint64_t cap) {
  const auto p = exact_distribution(policy, x, temperature, cap);
  const auto r = reward_row(reward, x, cap);
  return expected_max_of_k(p, r, k);
}

double best_of_k_bound(double mean, double reward_bound, std::size_t k) {
  if (k == 0) throw ConfigError("K must be at least 1");
  return mean + std::sqrt(reward_bound * reward_bound / 2.0 * std::log(static_cast<double>(k)));
}

BestOfKReport bound_check(const Policy& policy, const RewardFn& reward, PromptId x,
                          std::size_t k, double reward_bound) {
  if (!(reward_bound > 0.0)) throw ConfigError("reward bound must be positive");
  const auto p = exact_distribution(policy, x, 1.0);
  const auto r = reward_row(reward, x);
  BestOfKReport report;
  report.prompt = x;
  report.k = k;
  report.mean = expected_max_of_k(p, r, 1);
  report.expected_best = expected_max_of_k(p, r, k);
  report.bound = best_of_k_bound(report.mean, reward_bound, k);
  report.slack = report.bound - report.expected_best;
  const double tol = kBoundTolerance * std::max(1.0, reward_bound);
  if (report.expected_best < report.mean - tol || report.expected_best > report.bound + tol) {
    throw std::logic_error("best-of-K bound violated at prompt " + std::to_string(x) + ", K=" +
                           std::to_string(k) + ": mean=" + format_double(report.mean) +
                           " best=" + format_double(report.expected_best) +
                           " bound=" + format_double(report.bound));
  }
  return report;
}

BestOfKReport bound_check(const Policy& policy, const RewardFn& reward, PromptId x,
                          std::size_t k) {
  return bound_check(policy, reward, x, k, reward.bound());
}

void write_bound_csv(std::ostream& out, std::span<const BestOfKReport> reports) {
  out << "x,K,mean,exact_bok,bound,slack\n";
  for (const auto& r : reports) {
    out << r.prompt << ',' << r.k << ',' << format_double(r.mean) << ','
        << format_double(r.expected_best) << ',' << format_double(r.bound) << ','
        << format_double(r.slack) << '\n';
  }
}

}  // namespace raftlab
