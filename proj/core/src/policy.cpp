#include "raftlab/policy.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "raftlab/error.hpp"
#include "raftlab/numeric.hpp"
#include "raftlab/random.hpp"

namespace raftlab {

namespace {

std::uint64_t saturating_power(std::uint64_t base, std::size_t exponent) {
  std::uint64_t result = 1;
  for (std::size_t i = 0; i < exponent; ++i) {
    if (base != 0 && result > std::numeric_limits<std::uint64_t>::max() / base) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    result *= base;
  }
  return result;
}

void check_finite(std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError("policy logits must be finite");
  }
}

std::size_t num_contexts(const Policy& policy) {
  return std::visit([](const auto& p) { return p.num_contexts(); }, policy);
}

std::size_t row_width(const Policy& policy) {
  return std::visit([](const auto& p) { return p.row_width(); }, policy);
}

std::span<const double> row(const Policy& policy, std::size_t context) {
  return std::visit([context](const auto& p) { return p.row(context); }, policy);
}

// Calls step(context, token) for each generation step of response y.
template <typename F>
void for_each_step(const Policy& policy, PromptId x, ResponseId y, F&& step) {
  if (const auto* bandit = std::get_if<BanditPolicy>(&policy)) {
    (void)bandit;
    step(static_cast<std::size_t>(x), static_cast<Token>(y));
    return;
  }
  const auto& seq = std::get<SeqPolicy>(policy);
  const auto tokens = seq.decode(y);
  Token prev = 0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    step(seq.context(x, t, prev), tokens[t]);
    prev = tokens[t];
  }
}

// Row-wise log-softmax of the whole logit table.
std::vector<double> log_softmax_table(const Policy& policy, double temperature = 1.0) {
  const std::size_t width = row_width(policy);
  const std::size_t rows = num_contexts(policy);
  std::vector<double> out(rows * width);
  for (std::size_t c = 0; c < rows; ++c) {
    log_softmax(row(policy, c), temperature, std::span<double>(out).subspan(c * width, width));
  }
  return out;
}

void check_space(const Policy& policy, std::uint64_t cap) {
  const std::uint64_t n = num_responses(policy);
  if (n > cap) {
    throw EnumerationError("response space of size " + std::to_string(n) +
                           " exceeds enumeration cap " + std::to_string(cap));
  }
}

void check_temperature(double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be a positive finite number");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// PromptSpace

PromptSpace::PromptSpace(std::size_t prompts) : size_(prompts) {
  if (prompts == 0) throw ConfigError("prompt space needs at least one prompt");
}

PromptSpace::PromptSpace(std::size_t vocab, std::size_t length,
                         std::vector<std::vector<Token>> targets)
    : size_(targets.size()), vocab_(vocab), length_(length), targets_(std::move(targets)) {
  if (size_ == 0) throw ConfigError("prompt space needs at least one prompt");
  if (vocab == 0 || length == 0) throw ConfigError("vocabulary and length must be positive");
  for (const auto& t : targets_) {
    if (t.size() != length) throw DomainError("target sequence has wrong length");
    for (Token tok : t) {
      if (tok >= vocab) throw DomainError("target token outside vocabulary");
    }
  }
}

PromptSpace PromptSpace::random_targets(std::size_t prompts, std::size_t vocab,
                                        std::size_t length, std::uint64_t seed) {
  Rng rng(derive_seed({seed, stream::kWorld, 0x7467}));
  std::vector<std::vector<Token>> targets(prompts, std::vector<Token>(length));
  for (auto& t : targets) {
    for (auto& tok : t) tok = static_cast<Token>(uniform_index(rng, vocab));
  }
  return PromptSpace(vocab, length, std::move(targets));
}

std::span<const Token> PromptSpace::target(PromptId x) const {
  if (!has_targets()) throw DomainError("prompt space has no target sequences");
  if (x >= size_) throw DomainError("unknown prompt " + std::to_string(x));
  return targets_[x];
}

std::vector<PromptId> PromptSpace::all() const {
  std::vector<PromptId> out(size_);
  for (std::size_t i = 0; i < size_; ++i) out[i] = static_cast<PromptId>(i);
  return out;
}

void SamplingConfig::validate() const {
  check_temperature(temperature);
  if (k == 0) throw ConfigError("K must be at least 1");
}

// ---------------------------------------------------------------------------
// BanditPolicy

BanditPolicy::BanditPolicy(std::size_t prompts, std::size_t responses)
    : BanditPolicy(prompts, responses, std::vector<double>(prompts * responses, 0.0)) {}

BanditPolicy::BanditPolicy(std::size_t prompts, std::size_t responses,
                           std::vector<double> logits)
    : prompts_(prompts), responses_(responses), logits_(std::move(logits)) {
  if (prompts == 0 || responses == 0) throw ConfigError("bandit policy needs m, n >= 1");
  if (logits_.size() != prompts * responses) throw DomainError("logit table has wrong size");
  check_finite(logits_);
}

std::span<const double> BanditPolicy::row(std::size_t context) const {
  return std::span<const double>(logits_).subspan(context * responses_, responses_);
}

// ---------------------------------------------------------------------------
// SeqPolicy

SeqPolicy::SeqPolicy(std::size_t prompts, std::size_t vocab, std::size_t length)
    : prompts_(prompts), vocab_(vocab), length_(length) {
  if (prompts == 0 || vocab == 0 || length == 0) {
    throw ConfigError("sequence policy needs m, V, L >= 1");
  }
  logits_.assign(num_contexts() * vocab_, 0.0);
}

SeqPolicy::SeqPolicy(std::size_t prompts, std::size_t vocab, std::size_t length,
                     std::vector<double> logits)
    : SeqPolicy(prompts, vocab, length) {
  if (logits.size() != logits_.size()) throw DomainError("logit table has wrong size");
  logits_ = std::move(logits);
  check_finite(logits_);
}

std::uint64_t SeqPolicy::num_responses() const { return saturating_power(vocab_, length_); }

std::size_t SeqPolicy::context(PromptId x, std::size_t position, Token prev) const {
  const std::size_t base = static_cast<std::size_t>(x) * contexts_per_prompt();
  if (position == 0) return base;
  return base + 1 + (position - 1) * vocab_ + prev;
}

std::span<const double> SeqPolicy::row(std::size_t context) const {
  return std::span<const double>(logits_).subspan(context * vocab_, vocab_);
}

std::vector<Token> SeqPolicy::decode(ResponseId y) const {
  std::vector<Token> tokens(length_);
  for (std::size_t t = length_; t-- > 0;) {
    tokens[t] = static_cast<Token>(y % vocab_);
    y /= vocab_;
  }
  return tokens;
}

ResponseId SeqPolicy::encode(std::span<const Token> tokens) const {
  if (tokens.size() != length_) throw DomainError("sequence has wrong length");
  ResponseId y = 0;
  for (Token tok : tokens) {
    if (tok >= vocab_) throw DomainError("token outside vocabulary");
    y = y * vocab_ + tok;
  }
  return y;
}

// ---------------------------------------------------------------------------
// Policy helpers

std::size_t num_prompts(const Policy& policy) {
  return std::visit([](const auto& p) { return p.num_prompts(); }, policy);
}

std::uint64_t num_responses(const Policy& policy) {
  return std::visit([](const auto& p) { return p.num_responses(); }, policy);
}

std::span<const double> logits(const Policy& policy) {
  return std::visit([](const auto& p) { return p.logits(); }, policy);
}

Policy with_logits(const Policy& policy, std::vector<double> values) {
  if (const auto* b = std::get_if<BanditPolicy>(&policy)) {
    return BanditPolicy(b->num_prompts(), b->num_responses(), std::move(values));
  }
  const auto& s = std::get<SeqPolicy>(policy);
  return SeqPolicy(s.num_prompts(), s.vocab(), s.length(), std::move(values));
}

bool same_shape(const Policy& a, const Policy& b) {
  if (a.index() != b.index()) return false;
  if (const auto* sa = std::get_if<SeqPolicy>(&a)) {
    const auto& sb = std::get<SeqPolicy>(b);
    return sa->num_prompts() == sb.num_prompts() && sa->vocab() == sb.vocab() &&
           sa->length() == sb.length();
  }
  return num_prompts(a) == num_prompts(b) && num_responses(a) == num_responses(b);
}

void check_prompt(const Policy& policy, PromptId x) {
  if (x >= num_prompts(policy)) throw DomainError("unknown prompt " + std::to_string(x));
}

void check_response(const Policy& policy, ResponseId y) {
  if (y >= num_responses(policy)) throw DomainError("response " + std::to_string(y) + " out of range");
}

// ---------------------------------------------------------------------------
// Exact distributions

std::vector<double> log_distribution(const Policy& policy, PromptId x, std::uint64_t cap) {
  check_prompt(policy, x);
  check_space(policy, cap);
  if (const auto* bandit = std::get_if<BanditPolicy>(&policy)) {
    std::vector<double> out(bandit->num_responses());
    log_softmax(bandit->row(x), 1.0, out);
    return out;
  }
  const auto& seq = std::get<SeqPolicy>(policy);
  const std::size_t V = seq.vocab();
  std::vector<double> lrow(V);
  std::vector<double> prefix{0.0};
  for (std::size_t t = 0; t < seq.length(); ++t) {
    std::vector<double> next(prefix.size() * V);
    if (t == 0) {
      log_softmax(seq.row(seq.context(x, 0, 0)), 1.0, lrow);
      for (std::size_t v = 0; v < V; ++v) next[v] = lrow[v];
    } else {
      // Prefixes ending in the same token share a context; iterate by last token.
      for (Token prev = 0; prev < V; ++prev) {
        log_softmax(seq.row(seq.context(x, t, prev)), 1.0, lrow);
        for (std::size_t i = prev; i < prefix.size(); i += V) {
          for (std::size_t v = 0; v < V; ++v) next[i * V + v] = prefix[i] + lrow[v];
        }
      }
    }
    prefix = std::move(next);
  }
  return prefix;
}

std::vector<double> exact_distribution(const Policy& policy, PromptId x, double temperature,
                                       std::uint64_t cap) {
  check_temperature(temperature);
  if (const auto* bandit = std::get_if<BanditPolicy>(&policy)) {
    check_prompt(policy, x);
    check_space(policy, cap);
    return softmax(bandit->row(x), temperature);
  }
  auto logp = log_distribution(policy, x, cap);
  for (double& v : logp) v /= temperature;
  const double lz = log_sum_exp(logp);
  for (double& v : logp) v = std::exp(v - lz);
  return logp;
}

double log_prob(const Policy& policy, PromptId x, ResponseId y) {
  check_prompt(policy, x);
  check_response(policy, y);
  std::vector<double> lrow(row_width(policy));
  double total = 0.0;
  for_each_step(policy, x, y, [&](std::size_t ctx, Token tok) {
    log_softmax(row(policy, ctx), 1.0, lrow);
    total += lrow[tok];
  });
  return total;
}

// ---------------------------------------------------------------------------
// Sampling

ResponseSampler::ResponseSampler(const Policy& policy, double temperature, std::uint64_t cap)
    : policy_(policy), temperature_(temperature), cap_(cap) {
  check_temperature(temperature);
  ancestral_ = std::holds_alternative<BanditPolicy>(policy_) || temperature == 1.0;
  const std::size_t prompts = num_prompts(policy_);
  if (ancestral_) {
    const std::size_t width = row_width(policy_);
    const std::size_t rows = num_contexts(policy_);
    context_cdf_.resize(rows * width);
    for (std::size_t c = 0; c < rows; ++c) {
      const auto p = softmax(row(policy_, c), temperature_);
      double acc = 0.0;
      for (std::size_t v = 0; v < width; ++v) {
        acc += p[v];
        context_cdf_[c * width + v] = acc;
      }
    }
  } else {
    check_space(policy_, cap_);
    once_ = std::make_unique<std::once_flag[]>(prompts);
    prompt_cdf_.resize(prompts);
  }
}

const std::vector<double>& ResponseSampler::prompt_cdf(PromptId x) const {
  std::call_once(once_[x], [&] {
    auto p = exact_distribution(policy_, x, temperature_, cap_);
    double acc = 0.0;
    for (double& v : p) {
      acc += v;
      v = acc;
    }
    prompt_cdf_[x] = std::move(p);
  });
  return prompt_cdf_[x];
}

std::vector<ResponseId> ResponseSampler::draw(PromptId x, std::size_t k,
                                              std::uint64_t seed) const {
  check_prompt(policy_, x);
  if (k == 0) throw ConfigError("K must be at least 1");
  Rng rng(seed);
  std::vector<ResponseId> out(k);
  if (!ancestral_) {
    const auto& cdf = prompt_cdf(x);
    for (auto& y : out) y = draw_from_cdf(cdf, uniform01(rng));
    return out;
  }
  const std::size_t width = row_width(policy_);
  const std::span<const double> table(context_cdf_);
  if (std::holds_alternative<BanditPolicy>(policy_)) {
    const auto cdf = table.subspan(static_cast<std::size_t>(x) * width, width);
    for (auto& y : out) y = draw_from_cdf(cdf, uniform01(rng));
    return out;
  }
  const auto& seq = std::get<SeqPolicy>(policy_);
  for (auto& y : out) {
    ResponseId id = 0;
    Token prev = 0;
    for (std::size_t t = 0; t < seq.length(); ++t) {
      const auto cdf = table.subspan(seq.context(x, t, prev) * width, width);
      prev = static_cast<Token>(draw_from_cdf(cdf, uniform01(rng)));
      id = id * width + prev;
    }
    y = id;
  }
  return out;
}

std::vector<ResponseId> sample_responses(const Policy& policy, PromptId x,
                                         const SamplingConfig& cfg) {
  cfg.validate();
  check_prompt(policy, x);
  return ResponseSampler(policy, cfg.temperature).draw(x, cfg.k, cfg.seed);
}

// ---------------------------------------------------------------------------
// Fine-tuning

namespace {

void check_batch(const Policy& policy, std::span<const Example> batch) {
  if (batch.empty()) throw DomainError("fine-tuning batch is empty");
  for (const auto& ex : batch) {
    check_prompt(policy, ex.prompt);
    check_response(policy, ex.response);
  }
}

// Per-context token counts of the batch, same layout as the logit table.
std::vector<double> step_counts(const Policy& policy, std::span<const Example> batch) {
  const std::size_t width = row_width(policy);
  std::vector<double> counts(num_contexts(policy) * width, 0.0);
  for (const auto& ex : batch) {
    for_each_step(policy, ex.prompt, ex.response,
                  [&](std::size_t ctx, Token tok) { counts[ctx * width + tok] += 1.0; });
  }
  return counts;
}

double loss_from_counts(const Policy& policy, std::span<const double> counts,
                        std::size_t batch_size) {
  const auto lsm = log_softmax_table(policy);
  double total = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] != 0.0) total -= counts[i] * lsm[i];
  }
  return total / static_cast<double>(batch_size);
}

std::vector<double> gradient_from_counts(const Policy& policy, std::span<const double> counts,
                                         std::size_t batch_size) {
  const std::size_t width = row_width(policy);
  const std::size_t rows = num_contexts(policy);
  const double scale = 1.0 / static_cast<double>(batch_size);
  std::vector<double> grad(counts.size(), 0.0);
  for (std::size_t c = 0; c < rows; ++c) {
    const auto crow = counts.subspan(c * width, width);
    double weight = 0.0;
    for (double v : crow) weight += v;
    if (weight == 0.0) continue;
    const auto p = softmax(row(policy, c));
    for (std::size_t v = 0; v < width; ++v) {
      grad[c * width + v] = scale * (weight * p[v] - crow[v]);
    }
  }
  return grad;
}

}  // namespace

double sft_loss(const Policy& policy, std::span<const Example> batch) {
  check_batch(policy, batch);
  return loss_from_counts(policy, step_counts(policy, batch), batch.size());
}

std::vector<double> sft_gradient(const Policy& policy, std::span<const Example> batch) {
  check_batch(policy, batch);
  return gradient_from_counts(policy, step_counts(policy, batch), batch.size());
}

bool SftResult::monotone() const {
  for (std::size_t i = 1; i < losses.size(); ++i) {
    if (losses[i] > losses[i - 1]) return false;
  }
  return true;
}

SftResult sft_update(const Policy& policy, std::span<const Example> batch, double lr,
                     int epochs) {
  check_batch(policy, batch);
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  const auto counts = step_counts(policy, batch);
  SftResult result{policy, {}};
  result.losses.reserve(static_cast<std::size_t>(epochs) + 1);
  result.losses.push_back(loss_from_counts(policy, counts, batch.size()));
  for (int e = 0; e < epochs; ++e) {
    const auto grad = gradient_from_counts(result.policy, counts, batch.size());
    std::vector<double> next(logits(result.policy).begin(), logits(result.policy).end());
    for (std::size_t i = 0; i < next.size(); ++i) next[i] -= lr * grad[i];
    result.policy = with_logits(result.policy, std::move(next));
    result.losses.push_back(loss_from_counts(result.policy, counts, batch.size()));
  }
  return result;
}

}  // namespace raftlab
