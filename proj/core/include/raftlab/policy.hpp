#pragma once

/**
 * Tabular generative policies.
 *
 * Two concrete policies share one representation: a table of logit rows, one
 * row per conditioning context. A response is a path of (context, token)
 * steps; its probability is the product of the per-step softmax entries.
 *
 * - BanditPolicy: one context per prompt, responses are single tokens 0..n-1.
 * - SeqPolicy:    fixed-length-L token sequences over vocabulary 0..V-1,
 *                 generated left to right. Token t is conditioned on
 *                 (prompt, t, previous token); position 0 has one start
 *                 context per prompt. Responses are encoded as base-V
 *                 integers, position 0 most significant.
 *
 * Temperature lambda means the renormalized sequence-level distribution
 * p(y|x)^(1/lambda) / Z. For the bandit this is softmax(logits / lambda).
 *
 * Policies are values: updates return new policies.
 */

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <span>
#include <variant>
#include <vector>

namespace raftlab {

using PromptId = std::uint32_t;
using ResponseId = std::uint64_t;
using Token = std::uint32_t;

inline constexpr std::uint64_t kDefaultEnumerationCap = std::uint64_t{1} << 20;

/// Prompt set; the sequence environment additionally carries one hidden
/// target sequence per prompt.
class PromptSpace {
 public:
  explicit PromptSpace(std::size_t prompts);
  PromptSpace(std::size_t vocab, std::size_t length,
              std::vector<std::vector<Token>> targets);

  /// m prompts with independent uniformly random targets.
  static PromptSpace random_targets(std::size_t prompts, std::size_t vocab,
                                    std::size_t length, std::uint64_t seed);

  std::size_t size() const { return size_; }
  bool has_targets() const { return !targets_.empty(); }
  std::size_t vocab() const { return vocab_; }
  std::size_t length() const { return length_; }
  std::span<const Token> target(PromptId x) const;
  std::vector<PromptId> all() const;

 private:
  std::size_t size_ = 0;
  std::size_t vocab_ = 0;
  std::size_t length_ = 0;
  std::vector<std::vector<Token>> targets_;
};

struct SamplingConfig {
  double temperature = 1.0;
  std::size_t k = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One supervised (prompt, response) pair.
struct Example {
  PromptId prompt = 0;
  ResponseId response = 0;

  friend bool operator==(const Example&, const Example&) = default;
};

class BanditPolicy {
 public:
  /// Uniform policy (all logits zero).
  BanditPolicy(std::size_t prompts, std::size_t responses);
  BanditPolicy(std::size_t prompts, std::size_t responses, std::vector<double> logits);

  std::size_t num_prompts() const { return prompts_; }
  std::uint64_t num_responses() const { return responses_; }
  std::size_t num_contexts() const { return prompts_; }
  std::size_t row_width() const { return responses_; }

  std::span<const double> logits() const { return logits_; }
  std::span<const double> row(std::size_t context) const;

  friend bool operator==(const BanditPolicy&, const BanditPolicy&) = default;

 private:
  std::size_t prompts_;
  std::size_t responses_;
  std::vector<double> logits_;
};

class SeqPolicy {
 public:
  SeqPolicy(std::size_t prompts, std::size_t vocab, std::size_t length);
  SeqPolicy(std::size_t prompts, std::size_t vocab, std::size_t length,
            std::vector<double> logits);

  std::size_t num_prompts() const { return prompts_; }
  std::size_t vocab() const { return vocab_; }
  std::size_t length() const { return length_; }
  /// V^L, saturating at UINT64_MAX.
  std::uint64_t num_responses() const;
  std::size_t contexts_per_prompt() const { return 1 + (length_ - 1) * vocab_; }
  std::size_t num_contexts() const { return prompts_ * contexts_per_prompt(); }
  std::size_t row_width() const { return vocab_; }

  /// Row index of the conditional for token `position` given `prev`
  /// (ignored at position 0).
  std::size_t context(PromptId x, std::size_t position, Token prev) const;

  std::span<const double> logits() const { return logits_; }
  std::span<const double> row(std::size_t context) const;

  std::vector<Token> decode(ResponseId y) const;
  ResponseId encode(std::span<const Token> tokens) const;

  friend bool operator==(const SeqPolicy&, const SeqPolicy&) = default;

 private:
  std::size_t prompts_;
  std::size_t vocab_;
  std::size_t length_;
  std::vector<double> logits_;
};

using Policy = std::variant<BanditPolicy, SeqPolicy>;

std::size_t num_prompts(const Policy& policy);
std::uint64_t num_responses(const Policy& policy);
std::span<const double> logits(const Policy& policy);
/// Same shape as `policy`, new parameters.
Policy with_logits(const Policy& policy, std::vector<double> logits);
/// Both policies have identical kind and shape.
bool same_shape(const Policy& a, const Policy& b);

void check_prompt(const Policy& policy, PromptId x);
void check_response(const Policy& policy, ResponseId y);

/// Temperature-lambda distribution over every response of prompt x.
/// Throws EnumerationError when the space exceeds `cap`.
std::vector<double> exact_distribution(const Policy& policy, PromptId x, double temperature,
                                       std::uint64_t cap = kDefaultEnumerationCap);

/// log p(y|x) at temperature 1 for every response of prompt x.
std::vector<double> log_distribution(const Policy& policy, PromptId x,
                                     std::uint64_t cap = kDefaultEnumerationCap);

double log_prob(const Policy& policy, PromptId x, ResponseId y);

/// Draws i.i.d. responses at a fixed temperature. Per-prompt tables are built
/// on first use and shared; draw() is safe to call concurrently.
class ResponseSampler {
 public:
  ResponseSampler(const Policy& policy, double temperature,
                  std::uint64_t cap = kDefaultEnumerationCap);

  std::vector<ResponseId> draw(PromptId x, std::size_t k, std::uint64_t seed) const;

 private:
  const std::vector<double>& prompt_cdf(PromptId x) const;

  Policy policy_;
  double temperature_;
  std::uint64_t cap_;
  bool ancestral_ = false;
  std::vector<double> context_cdf_;  // row-wise cumulative probabilities
  mutable std::unique_ptr<std::once_flag[]> once_;
  mutable std::vector<std::vector<double>> prompt_cdf_;
};

/// K i.i.d. draws from the temperature-lambda distribution of prompt x;
/// deterministic in (policy, x, cfg.seed).
std::vector<ResponseId> sample_responses(const Policy& policy, PromptId x,
                                         const SamplingConfig& cfg);

/// Mean negative log-likelihood -(1/|B|) sum log p(y|x).
double sft_loss(const Policy& policy, std::span<const Example> batch);

/// Gradient of sft_loss with respect to the logit table (same layout).
std::vector<double> sft_gradient(const Policy& policy, std::span<const Example> batch);

struct SftResult {
  Policy policy;
  /// losses[0] before the first step, losses[e] after step e.
  std::vector<double> losses;

  bool monotone() const;
};

/// `epochs` full-batch gradient steps on sft_loss with constant step size.
SftResult sft_update(const Policy& policy, std::span<const Example> batch, double lr,
                     int epochs);

}  // namespace raftlab
