#include "raftlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "raftlab/error.hpp"
#include "raftlab/numeric.hpp"
#include "raftlab/random.hpp"

namespace raftlab {

double mean_test_reward(const Policy& policy, const RewardFn& reward,
                        std::span<const PromptId> prompts) {
  if (prompts.empty()) throw DomainError("no test prompts");
  std::vector<double> per_prompt;
  per_prompt.reserve(prompts.size());
  for (PromptId x : prompts) {
    const auto p = exact_distribution(policy, x, 1.0);
    const auto r = reward_row(reward, x);
    std::vector<double> terms(p.size());
    for (std::size_t y = 0; y < p.size(); ++y) terms[y] = p[y] * r[y];
    per_prompt.push_back(pairwise_sum(terms));
  }
  return pairwise_sum(per_prompt) / static_cast<double>(prompts.size());
}

double mean_test_reward(const Policy& policy, const RewardFn& reward,
                        std::span<const PromptId> prompts, const MonteCarlo& mc) {
  if (prompts.empty()) throw DomainError("no test prompts");
  if (mc.samples_per_prompt == 0) throw ConfigError("Monte-Carlo evaluation needs samples");
  const ResponseSampler sampler(policy, mc.temperature);
  std::vector<double> rewards;
  rewards.reserve(prompts.size() * mc.samples_per_prompt);
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const auto ys = sampler.draw(prompts[i], mc.samples_per_prompt,
                                 derive_seed({mc.seed, stream::kEval, i}));
    for (ResponseId y : ys) rewards.push_back(reward.score(prompts[i], y));
  }
  return pairwise_sum(rewards) / static_cast<double>(rewards.size());
}

namespace {

// Calls f(row, token) for every generation step of response y.
template <class F>
void for_each_step(const Policy& policy, PromptId x, ResponseId y, F&& f) {
  check_prompt(policy, x);
  check_response(policy, y);
  if (const auto* seq = std::get_if<SeqPolicy>(&policy)) {
    const auto tokens = seq->decode(y);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      f(seq->row(seq->context(x, t, t ? tokens[t - 1] : 0)), tokens[t]);
    }
  } else {
    f(std::get<BanditPolicy>(policy).row(x), static_cast<Token>(y));
  }
}

}  // namespace

PerplexityResult perplexity(const Policy& policy, std::span<const Example> references) {
  if (references.empty()) throw DomainError("perplexity needs a nonempty reference set");
  std::vector<double> nll;
  std::vector<double> inverse;
  for (const auto& ex : references) {
    for_each_step(policy, ex.prompt, ex.response, [&](std::span<const double> row, Token tok) {
      nll.push_back(log_sum_exp(row) - row[tok]);
      double z = 0.0;
      for (double l : row) z += std::exp(l - row[tok]);
      inverse.push_back(z);
    });
  }
  for (double v : nll) {
    if (!std::isfinite(v)) return {std::numeric_limits<double>::infinity(), true};
  }
  // The geometric mean of a constant sequence is that constant; returning it
  // directly keeps e.g. the uniform policy at exactly V.
  if (std::all_of(nll.begin(), nll.end(), [&](double v) { return v == nll.front(); }) &&
      std::all_of(inverse.begin(), inverse.end(), [&](double v) { return v == inverse.front(); })) {
    return {inverse.front(), false};
  }
  return {std::exp(pairwise_sum(nll) / static_cast<double>(nll.size())), false};
}

KlResult kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DomainError("KL needs distributions of equal size");
  std::vector<double> terms(p.size(), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return {std::numeric_limits<double>::infinity(), true};
    terms[i] = p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return {std::max(0.0, pairwise_sum(terms)), false};
}

KlResult kl_to_reference(const Policy& policy, const Policy& reference,
                         std::span<const PromptId> prompts, std::uint64_t cap) {
  if (!same_shape(policy, reference)) throw DomainError("KL needs policies of the same shape");
  if (prompts.empty()) throw DomainError("no prompts for KL");
  std::vector<double> per_prompt;
  per_prompt.reserve(prompts.size());
  for (PromptId x : prompts) {
    const auto lp = log_distribution(policy, x, cap);
    const auto lq = log_distribution(reference, x, cap);
    std::vector<double> terms(lp.size());
    for (std::size_t y = 0; y < lp.size(); ++y) {
      const double p = std::exp(lp[y]);
      terms[y] = p == 0.0 ? 0.0 : p * (lp[y] - lq[y]);
    }
    per_prompt.push_back(std::max(0.0, pairwise_sum(terms)));
  }
  return {pairwise_sum(per_prompt) / static_cast<double>(prompts.size()), false};
}

namespace {

using Ngram = std::vector<Token>;

struct NgramStats {
  std::size_t total = 0;
  std::size_t distinct = 0;
  std::uint64_t once = 0;
};

NgramStats count_ngrams(std::span<const std::vector<Token>> texts, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  NgramStats stats;
  for (const auto& text : texts) {
    if (text.size() < n) continue;
    for (std::size_t i = 0; i + n <= text.size(); ++i) {
      ++counts[Ngram(text.begin() + static_cast<std::ptrdiff_t>(i),
                     text.begin() + static_cast<std::ptrdiff_t>(i + n))];
      ++stats.total;
    }
  }
  stats.distinct = counts.size();
  for (const auto& [gram, c] : counts) {
    if (c == 1) ++stats.once;
  }
  return stats;
}

}  // namespace

DiversityReport diversity(std::span<const std::vector<Token>> texts) {
  std::vector<Token> corpus;
  for (const auto& t : texts) corpus.insert(corpus.end(), t.begin(), t.end());
  if (corpus.empty()) throw DomainError("diversity needs a nonempty corpus");

  DiversityReport report;
  const std::size_t segments = corpus.size() / kMsttrSegment;
  if (segments == 0) {
    report.short_corpus = true;
    report.msttr_100 = static_cast<double>(std::set<Token>(corpus.begin(), corpus.end()).size()) /
                       static_cast<double>(corpus.size());
  } else {
    std::vector<double> ttr(segments);
    for (std::size_t s = 0; s < segments; ++s) {
      const auto first = corpus.begin() + static_cast<std::ptrdiff_t>(s * kMsttrSegment);
      ttr[s] = static_cast<double>(std::set<Token>(first, first + kMsttrSegment).size()) /
               static_cast<double>(kMsttrSegment);
    }
    report.msttr_100 = pairwise_sum(ttr) / static_cast<double>(segments);
  }

  const auto uni = count_ngrams(texts, 1);
  const auto bi = count_ngrams(texts, 2);
  report.distinct_1 = uni.total ? static_cast<double>(uni.distinct) / static_cast<double>(uni.total) : 0.0;
  report.distinct_2 = bi.total ? static_cast<double>(bi.distinct) / static_cast<double>(bi.total) : 0.0;
  report.unique_1 = uni.once;
  report.unique_2 = bi.once;
  report.mean_length = static_cast<double>(corpus.size()) / static_cast<double>(texts.size());
  return report;
}

std::vector<std::vector<Token>> response_texts(const Policy& policy,
                                               std::span<const ResponseId> responses) {
  std::vector<std::vector<Token>> texts;
  texts.reserve(responses.size());
  for (ResponseId y : responses) {
    check_response(policy, y);
    if (const auto* seq = std::get_if<SeqPolicy>(&policy)) {
      texts.push_back(seq->decode(y));
    } else {
      texts.push_back({static_cast<Token>(y)});
    }
  }
  return texts;
}

std::string eval_report_row(const EvalReport& r) {
  std::ostringstream out;
  out << format_double(r.mean_test_reward) << ',' << format_double(r.perplexity) << ','
      << format_double(r.kl_to_initial) << ',' << format_double(r.diversity.msttr_100) << ','
      << format_double(r.diversity.distinct_1) << ',' << format_double(r.diversity.distinct_2)
      << ',' << r.diversity.unique_1 << ',' << r.diversity.unique_2 << ','
      << format_double(r.diversity.mean_length);
  return out.str();
}

}  // namespace raftlab
