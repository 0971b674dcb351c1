#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "raftlab/policy.hpp"
#include "raftlab/reward.hpp"

namespace raftlab {

/// Monte-Carlo settings for mean_test_reward; exact evaluation when absent.
struct MonteCarlo {
  std::size_t samples_per_prompt = 1000;
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

/// Exact: mean over prompts of sum_y p(y|x) r(x, y) at temperature 1.
double mean_test_reward(const Policy& policy, const RewardFn& reward,
                        std::span<const PromptId> prompts);
/// Monte-Carlo estimate of the same quantity at mc.temperature.
double mean_test_reward(const Policy& policy, const RewardFn& reward,
                        std::span<const PromptId> prompts, const MonteCarlo& mc);

struct PerplexityResult {
  double value = 0.0;
  /// Some reference response has probability zero; value is +inf.
  bool infinite = false;
};

/// exp(mean per-token NLL) for sequence policies, exp(mean per-response NLL)
/// for the bandit.
PerplexityResult perplexity(const Policy& policy, std::span<const Example> references);

struct KlResult {
  double value = 0.0;
  bool infinite = false;
};

/// Mean over prompts of KL(policy || reference), exact by enumeration.
KlResult kl_to_reference(const Policy& policy, const Policy& reference,
                         std::span<const PromptId> prompts,
                         std::uint64_t cap = kDefaultEnumerationCap);

/// KL(p || q) for explicit distributions.
KlResult kl_divergence(std::span<const double> p, std::span<const double> q);

struct DiversityReport {
  double msttr_100 = 0.0;
  double distinct_1 = 0.0;
  double distinct_2 = 0.0;
  std::uint64_t unique_1 = 0;
  std::uint64_t unique_2 = 0;
  double mean_length = 0.0;
  /// Corpus shorter than one segment; msttr is the single-segment TTR.
  bool short_corpus = false;
};

inline constexpr std::size_t kMsttrSegment = 100;

/// Lexical diversity of a corpus of token texts. MSTTR uses consecutive
/// 100-token segments of the concatenated corpus (partial tail dropped);
/// n-grams never cross text boundaries. distinct_n is 0 when the corpus has
/// no n-grams.
DiversityReport diversity(std::span<const std::vector<Token>> texts);

/// Token view of sampled responses: the decoded sequence for SeqPolicy, the
/// single response index for BanditPolicy.
std::vector<std::vector<Token>> response_texts(const Policy& policy,
                                               std::span<const ResponseId> responses);

struct EvalReport {
  double mean_test_reward = 0.0;
  double perplexity = 0.0;
  double kl_to_initial = 0.0;
  DiversityReport diversity;
};

/// Fixed field order of the EvalReport CSV row.
inline constexpr const char* kEvalReportHeader =
    "mean_test_reward,perplexity,kl_to_initial,msttr_100,distinct_1,distinct_2,unique_1,"
    "unique_2,mean_length";

std::string eval_report_row(const EvalReport& report);

}  // namespace raftlab
