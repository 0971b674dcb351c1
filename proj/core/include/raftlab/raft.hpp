#pragma once
/**
 * The reward-ranked fine-tuning loop.
 *
 * Each stage samples b prompts with replacement, draws K responses per prompt
 * from the current policy at temperature lambda, keeps the best response per
 * prompt (local ranking) or the top floor(b/K) single draws across prompts
 * (global ranking), and fine-tunes on the kept set. With beta > 0 samples are
 * ranked by r - beta * (log p_cur - log p_ref) where p_ref is the frozen
 * stage-0 policy.
 */

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "raftlab/metrics.hpp"
#include "raftlab/policy.hpp"
#include "raftlab/reward.hpp"

namespace raftlab {

enum class RankingMode { Local, Global };
enum class Provenance { Own, Teacher };

const char* to_string(RankingMode mode);
const char* to_string(Provenance provenance);
RankingMode parse_ranking_mode(const std::string& text);

struct RaftConfig {
  std::size_t b = 256;
  std::size_t k = 8;
  double temperature = 1.0;
  double beta = 0.0;
  RankingMode mode = RankingMode::Local;
  std::size_t max_stages = 30;
  double lr = 4.0;
  int epochs = 2;
  /// Convergence band; may be +inf.
  double eps = 0.01;
  std::uint64_t seed = 0;
  /// Fine-tune the stage-0 policy on each batch instead of the current one.
  bool from_initial = false;
  /// Responses drawn per test prompt for the diversity metrics.
  std::size_t eval_samples = 16;

  void validate() const;
};

struct ScoredSample {
  ResponseId response = 0;
  /// Observed (possibly noisy) reward.
  double reward = 0.0;
  /// Filled only when beta > 0.
  double logp_current = 0.0;
  double logp_reference = 0.0;
};

struct PromptSamples {
  PromptId prompt = 0;
  std::vector<ScoredSample> samples;
};

struct Selected {
  PromptId prompt = 0;
  ResponseId response = 0;
  double reward = 0.0;
  /// Ranking score: the reward itself when beta = 0.
  double score = 0.0;

  friend bool operator==(const Selected&, const Selected&) = default;
};

struct FilteredBatch {
  std::vector<Selected> entries;
  Provenance provenance = Provenance::Own;

  std::vector<Example> examples() const;
  double mean_reward() const;
  friend bool operator==(const FilteredBatch&, const FilteredBatch&) = default;
};

double modified_reward(double r, double logp_current, double logp_reference, double beta);

/// b prompts drawn uniformly with replacement from `pool` for `stage`.
std::vector<PromptId> sample_prompts(std::span<const PromptId> pool, std::size_t b,
                                     std::uint64_t seed, std::uint64_t stage);

/// K draws per prompt (one in global mode) scored by `reward`. Slot i uses
/// the seed stream (seed, stage, i) so the result does not depend on
/// scheduling. `reference` is required when beta > 0.
std::vector<PromptSamples> collect(const Policy& policy, std::span<const PromptId> prompts,
                                   const RaftConfig& cfg, const RewardFn& reward,
                                   const Policy* reference, std::uint64_t stage);

/// Per-prompt argmax of the ranking score; ties go to the lowest sample index.
FilteredBatch rank_local(std::span<const PromptSamples> samples, double beta);

/// The floor(b/K) best samples over all prompts; ties go to the lowest
/// (prompt slot, sample) index.
FilteredBatch rank_global(std::span<const PromptSamples> samples, const RaftConfig& cfg);

FilteredBatch rank(std::span<const PromptSamples> samples, const RaftConfig& cfg);

struct RaftEnvironment {
  /// Reward the loop optimizes (may be noisy or a learned proxy).
  RewardPtr reward;
  /// Evaluation-only reward; the optimized reward's deterministic part when null.
  RewardPtr gold;
  std::vector<PromptId> train_prompts;
  std::vector<PromptId> test_prompts;
  /// (x, y) pairs for perplexity.
  std::vector<Example> reference_set;

  const RewardFn& gold_reward() const { return gold ? *gold : *reward; }
  void validate(const Policy& policy) const;
};

/// Per-run constants of the exact evaluation: reward rows of every prompt and
/// the reference policy's log-distributions. Immutable once built.
class EvalCache {
 public:
  EvalCache(const RaftEnvironment& env, const Policy& reference);

  std::span<const double> reward_row(PromptId x) const { return reward_rows_.at(x); }
  std::span<const double> gold_row(PromptId x) const;
  std::span<const double> reference_log(PromptId x) const { return reference_log_.at(x); }

 private:
  std::vector<std::vector<double>> reward_rows_;
  std::vector<std::vector<double>> gold_rows_;
  std::vector<std::vector<double>> reference_log_;
};

struct Evaluation {
  EvalReport report;
  double gold_reward = 0.0;
  bool perplexity_infinite = false;
  /// Exact mean reward per prompt id (optimized reward); NaN where not evaluated.
  std::vector<double> prompt_reward;
};

/// Exact rewards and KL, plus diversity of eval_samples draws per test prompt.
Evaluation evaluate(const Policy& policy, const EvalCache& cache, const RaftEnvironment& env,
                    const RaftConfig& cfg, std::uint64_t stage);
Evaluation evaluate(const Policy& policy, const Policy& reference, const RaftEnvironment& env,
                    const RaftConfig& cfg, std::uint64_t stage);

struct StageRecord {
  std::uint64_t stage = 0;
  double selection_reward = 0.0;
  /// Exact reward of the collecting policy on this stage's prompts.
  double train_reward = 0.0;
  double test_reward = 0.0;
  double gold_reward = 0.0;
  double kl_to_initial = 0.0;
  double perplexity = 0.0;
  double msttr_100 = 0.0;
  double distinct_1 = 0.0;
  double distinct_2 = 0.0;
  std::uint64_t unique_1 = 0;
  std::uint64_t unique_2 = 0;
  double mean_length = 0.0;
  std::size_t batch_size = 0;
  double sft_loss_start = 0.0;
  double sft_loss_end = 0.0;
  bool sft_monotone = true;
  Provenance provenance = Provenance::Own;
  double wall_time = 0.0;
};

struct RaftState {
  Policy policy;
  /// Frozen stage-0 policy.
  Policy reference;
  std::uint64_t stage = 0;
  /// Built on first use when null.
  std::shared_ptr<const EvalCache> cache;
  /// Exact per-prompt reward of `policy`, from its last evaluation.
  std::vector<double> prompt_reward;
};

/// Supplies the stage batch instead of own-policy collection.
using BatchSource =
    std::function<FilteredBatch(std::uint64_t stage, std::span<const PromptId> prompts)>;

struct StageResult {
  RaftState state;
  StageRecord record;
  FilteredBatch batch;
};

/// One collect -> rank -> fine-tune -> evaluate step. The input state is
/// never modified, so a throwing stage leaves the caller's policy intact.
StageResult run_stage(const RaftState& state, const RaftEnvironment& env, const RaftConfig& cfg,
                      const BatchSource& source = {});

/// Batches collected by a fixed teacher policy with the student's streams.
BatchSource fixed_teacher(Policy teacher, RewardPtr reward, RaftConfig cfg);

/// A teacher that runs its own loop in step with the student and hands over
/// each stage's batch.
BatchSource lockstep_teacher(Policy teacher_initial, RaftEnvironment env, RaftConfig cfg);

/// |h_t - mean(h_{t-2}, h_{t-1}, h_t)| < eps for the last three stages,
/// where history[0] is the stage-0 evaluation.
bool converged(std::span<const double> history, double eps);

struct RunResult {
  Evaluation initial;
  std::vector<StageRecord> records;
  Policy final_policy;
  bool converged = false;
  /// Stage at which the convergence rule fired.
  std::optional<std::uint64_t> convergence_stage;
};

using StageObserver = std::function<void(const StageResult&)>;

RunResult run_raft(const Policy& initial, const RaftEnvironment& env, const RaftConfig& cfg,
                   const BatchSource& source = {}, const StageObserver& observer = {});

}  // namespace raftlab
