#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "raftlab/checkpoint.hpp"
#include "raftlab/policy.hpp"

namespace raftlab {

/// Identifies one reward query so that noisy rewards can derive an
/// independent, reproducible noise draw per (stage, prompt, response, draw).
struct QueryKey {
  std::uint64_t stage = 0;
  std::uint64_t draw = 0;
};

/// Scalar reward r(x, y) over an enumerable response space.
///
/// score() is the deterministic part of the reward. query() is what an
/// optimizer observes; it differs from score() only for noise wrappers.
class RewardFn {
 public:
  virtual ~RewardFn() = default;

  virtual std::size_t num_prompts() const = 0;
  virtual std::uint64_t num_responses() const = 0;
  /// Declared bound B with |r| <= B on the deterministic part.
  virtual double bound() const = 0;
  virtual double score(PromptId x, ResponseId y) const = 0;
  virtual double query(PromptId x, ResponseId y, QueryKey key) const;

  void check(PromptId x, ResponseId y) const;
};

using RewardPtr = std::shared_ptr<const RewardFn>;

/// m x n table of rewards in [0, B].
class RewardTable final : public RewardFn {
 public:
  RewardTable(std::size_t prompts, std::size_t responses, std::vector<double> values,
              double bound);

  /// Entries i.i.d. uniform on [0, B].
  static RewardTable uniform(std::size_t prompts, std::size_t responses, double bound,
                             std::uint64_t seed);
  /// B * (a[y] + c[x][y]) / 2.5 with a ~ U[0, 0.5] and c ~ U[0, 2]: a weak
  /// response-only effect under a strong prompt-response interaction.
  static RewardTable interaction(std::size_t prompts, std::size_t responses, double bound,
                                 std::uint64_t seed);

  std::size_t num_prompts() const override { return prompts_; }
  std::uint64_t num_responses() const override { return responses_; }
  double bound() const override { return bound_; }
  double score(PromptId x, ResponseId y) const override;

  std::span<const double> values() const { return values_; }

  TableDump dump() const;
  static RewardTable from_dump(const TableDump& dump);

 private:
  std::size_t prompts_;
  std::size_t responses_;
  double bound_;
  std::vector<double> values_;
};

/// Fraction of positions where the response matches the prompt's target.
class HammingReward final : public RewardFn {
 public:
  explicit HammingReward(PromptSpace space);

  std::size_t num_prompts() const override { return space_.size(); }
  std::uint64_t num_responses() const override { return responses_; }
  double bound() const override { return 1.0; }
  double score(PromptId x, ResponseId y) const override;

  const PromptSpace& space() const { return space_; }

 private:
  PromptSpace space_;
  std::uint64_t responses_;
};

struct NoiseConfig {
  /// 1: r + N(0, s^2) on every query.
  /// 2: per prompt and stage, with probability p draw an offset a(x) from the
  ///    menu; queries of a corrupted prompt return r + N(a(x), s^2).
  /// 3: per query, with probability p draw a(x, y) from the menu and return
  ///    r + N(a(x, y), s^2).
  int mode = 1;
  double probability = 0.2;
  std::vector<double> offsets{-0.75, -0.25, 0.5, 1.0};
  double stddev = 1.0;
  std::uint64_t seed = 0;
  /// Mode 2 only: redraw the corrupted-prompt assignment every stage.
  bool redraw_offsets_each_stage = true;

  void validate() const;
};

class NoisyReward final : public RewardFn {
 public:
  NoisyReward(RewardPtr inner, NoiseConfig cfg);

  std::size_t num_prompts() const override { return inner_->num_prompts(); }
  std::uint64_t num_responses() const override { return inner_->num_responses(); }
  double bound() const override { return inner_->bound(); }
  double score(PromptId x, ResponseId y) const override { return inner_->score(x, y); }
  double query(PromptId x, ResponseId y, QueryKey key) const override;

  /// Mode-2 offset of prompt x at `stage`; 0 when the prompt is clean.
  double prompt_offset(PromptId x, std::uint64_t stage) const;
  const NoiseConfig& config() const { return cfg_; }

 private:
  RewardPtr inner_;
  NoiseConfig cfg_;
};

/// r(x, y) - baseline.
class RecenteredReward final : public RewardFn {
 public:
  RecenteredReward(RewardPtr inner, double baseline);

  std::size_t num_prompts() const override { return inner_->num_prompts(); }
  std::uint64_t num_responses() const override { return inner_->num_responses(); }
  double bound() const override;
  double score(PromptId x, ResponseId y) const override;
  double query(PromptId x, ResponseId y, QueryKey key) const override;

 private:
  RewardPtr inner_;
  double baseline_;
};

RewardPtr apply_noise(RewardPtr reward, NoiseConfig cfg);
RewardPtr recenter(RewardPtr reward, double baseline);

/// Deterministic reward of every response of prompt x.
std::vector<double> reward_row(const RewardFn& reward, PromptId x,
                               std::uint64_t cap = kDefaultEnumerationCap);

struct GreedyOptimum {
  ResponseId response = 0;
  double reward = 0.0;
};

/// argmax_y r(x, y) by exhaustive search; ties go to the lowest response.
GreedyOptimum greedy_optimal(const RewardFn& reward, PromptId x,
                             std::uint64_t cap = kDefaultEnumerationCap);

/// Mean over all prompts of the greedy-optimal reward.
double mean_greedy_optimum(const RewardFn& reward, std::uint64_t cap = kDefaultEnumerationCap);

}  // namespace raftlab
