#include "raftlab/raft.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <stdexcept>

#include "raftlab/error.hpp"
#include "raftlab/numeric.hpp"
#include "raftlab/random.hpp"

namespace raftlab {

const char* to_string(RankingMode mode) { return mode == RankingMode::Local ? "local" : "global"; }

const char* to_string(Provenance provenance) {
  return provenance == Provenance::Own ? "own" : "teacher";
}

RankingMode parse_ranking_mode(const std::string& text) {
  if (text == "local") return RankingMode::Local;
  if (text == "global") return RankingMode::Global;
  throw ConfigError("ranking mode must be local or global, got '" + text + "'");
}

void RaftConfig::validate() const {
  if (b < 1) throw ConfigError("b must be >= 1");
  if (k < 1) throw ConfigError("K must be >= 1");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("lambda must be > 0");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be >= 0");
  if (max_stages < 1) throw ConfigError("T must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  if (mode == RankingMode::Global && b / k == 0) throw ConfigError("global ranking needs b >= K");
  if (eval_samples < 1) throw ConfigError("eval_samples must be >= 1");
}

std::vector<Example> FilteredBatch::examples() const {
  std::vector<Example> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back({e.prompt, e.response});
  return out;
}

double FilteredBatch::mean_reward() const {
  if (entries.empty()) throw DomainError("empty batch");
  std::vector<double> r;
  r.reserve(entries.size());
  for (const auto& e : entries) r.push_back(e.reward);
  return pairwise_sum(r) / static_cast<double>(r.size());
}

double modified_reward(double r, double logp_current, double logp_reference, double beta) {
  if (beta == 0.0) return r;
  return r - beta * (logp_current - logp_reference);
}

std::vector<PromptId> sample_prompts(std::span<const PromptId> pool, std::size_t b,
                                     std::uint64_t seed, std::uint64_t stage) {
  if (pool.empty()) throw DomainError("empty prompt pool");
  Rng rng(derive_seed({seed, stream::kPrompts, stage}));
  std::vector<PromptId> out(b);
  for (auto& x : out) x = pool[uniform_index(rng, pool.size())];
  return out;
}

std::vector<PromptSamples> collect(const Policy& policy, std::span<const PromptId> prompts,
                                   const RaftConfig& cfg, const RewardFn& reward,
                                   const Policy* reference, std::uint64_t stage) {
  cfg.validate();
  if (cfg.beta > 0.0 && !reference) throw ConfigError("beta > 0 needs a reference policy");
  const std::size_t draws = cfg.mode == RankingMode::Global ? 1 : cfg.k;
  const ResponseSampler sampler(policy, cfg.temperature);
  std::vector<PromptSamples> out(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const PromptId x = prompts[i];
    const auto ys = sampler.draw(x, draws, derive_seed({cfg.seed, stream::kSamples, stage, i}));
    out[i].prompt = x;
    out[i].samples.resize(draws);
    for (std::size_t j = 0; j < draws; ++j) {
      auto& s = out[i].samples[j];
      s.response = ys[j];
      s.reward = reward.query(x, ys[j], QueryKey{stage, i * draws + j});
      if (cfg.beta > 0.0) {
        s.logp_current = log_prob(policy, x, ys[j]);
        s.logp_reference = log_prob(*reference, x, ys[j]);
      }
    }
  }
  return out;
}

FilteredBatch rank_local(std::span<const PromptSamples> samples, double beta) {
  FilteredBatch batch;
  batch.entries.reserve(samples.size());
  for (const auto& ps : samples) {
    if (ps.samples.empty()) throw DomainError("prompt with no samples");
    std::optional<Selected> best;
    for (const auto& s : ps.samples) {
      const double score = modified_reward(s.reward, s.logp_current, s.logp_reference, beta);
      if (!best || score > best->score) best = Selected{ps.prompt, s.response, s.reward, score};
    }
    batch.entries.push_back(*best);
  }
  return batch;
}

FilteredBatch rank_global(std::span<const PromptSamples> samples, const RaftConfig& cfg) {
  const std::size_t keep = cfg.b / cfg.k;
  if (keep == 0) throw ConfigError("global ranking keeps floor(b/K) = 0 samples");
  std::vector<Selected> all;
  for (const auto& ps : samples) {
    if (ps.samples.empty()) throw DomainError("prompt with no samples");
    for (const auto& s : ps.samples) {
      all.push_back({ps.prompt, s.response, s.reward,
                     modified_reward(s.reward, s.logp_current, s.logp_reference, cfg.beta)});
    }
  }
  if (all.size() < keep) throw DomainError("fewer samples than the global selection size");
  std::stable_sort(all.begin(), all.end(),
                   [](const Selected& a, const Selected& b) { return a.score > b.score; });
  all.resize(keep);
  return FilteredBatch{std::move(all), Provenance::Own};
}

FilteredBatch rank(std::span<const PromptSamples> samples, const RaftConfig& cfg) {
  return cfg.mode == RankingMode::Local ? rank_local(samples, cfg.beta) : rank_global(samples, cfg);
}

void RaftEnvironment::validate(const Policy& policy) const {
  if (!reward) throw ConfigError("environment has no reward");
  const auto check_reward = [&](const RewardFn& r) {
    if (r.num_prompts() != num_prompts(policy) || r.num_responses() != num_responses(policy)) {
      throw ConfigError("reward and policy spaces differ");
    }
  };
  check_reward(*reward);
  if (gold) check_reward(*gold);
  if (train_prompts.empty() || test_prompts.empty()) throw ConfigError("empty prompt set");
  for (PromptId x : train_prompts) check_prompt(policy, x);
  for (PromptId x : test_prompts) check_prompt(policy, x);
  if (reference_set.empty()) throw ConfigError("empty perplexity reference set");
}

EvalCache::EvalCache(const RaftEnvironment& env, const Policy& reference) {
  env.validate(reference);
  const std::size_t m = num_prompts(reference);
  reward_rows_.resize(m);
  reference_log_.resize(m);
  if (env.gold) gold_rows_.resize(m);
  for (std::size_t x = 0; x < m; ++x) {
    const auto id = static_cast<PromptId>(x);
    reward_rows_[x] = raftlab::reward_row(*env.reward, id);
    if (env.gold) gold_rows_[x] = raftlab::reward_row(*env.gold, id);
    reference_log_[x] = log_distribution(reference, id);
  }
}

std::span<const double> EvalCache::gold_row(PromptId x) const {
  return gold_rows_.empty() ? reward_row(x) : std::span<const double>(gold_rows_.at(x));
}

namespace {

struct PromptExact {
  double reward = 0.0;
  double gold = 0.0;
  double kl = 0.0;
};

PromptExact exact_prompt(const Policy& policy, const EvalCache& cache, PromptId x) {
  const auto lp = log_distribution(policy, x);
  const auto r = cache.reward_row(x);
  const auto g = cache.gold_row(x);
  const auto lq = cache.reference_log(x);
  std::vector<double> reward(lp.size()), gold(lp.size()), kl(lp.size());
  for (std::size_t y = 0; y < lp.size(); ++y) {
    const double p = std::exp(lp[y]);
    reward[y] = p * r[y];
    gold[y] = p * g[y];
    kl[y] = p == 0.0 ? 0.0 : p * (lp[y] - lq[y]);
  }
  return {pairwise_sum(reward), pairwise_sum(gold), std::max(0.0, pairwise_sum(kl))};
}

}  // namespace

Evaluation evaluate(const Policy& policy, const EvalCache& cache, const RaftEnvironment& env,
                    const RaftConfig& cfg, std::uint64_t stage) {
  Evaluation ev;
  ev.prompt_reward.assign(num_prompts(policy), std::numeric_limits<double>::quiet_NaN());
  std::vector<double> reward, gold, kl;
  for (PromptId x : env.test_prompts) {
    const auto e = exact_prompt(policy, cache, x);
    ev.prompt_reward[x] = e.reward;
    reward.push_back(e.reward);
    gold.push_back(e.gold);
    kl.push_back(e.kl);
  }
  const auto n = static_cast<double>(env.test_prompts.size());
  ev.report.mean_test_reward = pairwise_sum(reward) / n;
  ev.gold_reward = pairwise_sum(gold) / n;
  ev.report.kl_to_initial = pairwise_sum(kl) / n;
  const auto ppl = perplexity(policy, env.reference_set);
  ev.report.perplexity = ppl.value;
  ev.perplexity_infinite = ppl.infinite;

  const ResponseSampler sampler(policy, 1.0);
  std::vector<ResponseId> drawn;
  for (std::size_t i = 0; i < env.test_prompts.size(); ++i) {
    const auto ys = sampler.draw(env.test_prompts[i], cfg.eval_samples,
                                 derive_seed({cfg.seed, stream::kEval, stage, i}));
    drawn.insert(drawn.end(), ys.begin(), ys.end());
  }
  const auto texts = response_texts(policy, drawn);
  ev.report.diversity = diversity(texts);
  return ev;
}

Evaluation evaluate(const Policy& policy, const Policy& reference, const RaftEnvironment& env,
                    const RaftConfig& cfg, std::uint64_t stage) {
  return evaluate(policy, EvalCache(env, reference), env, cfg, stage);
}

namespace {

double batch_policy_reward(const Policy& policy, const EvalCache& cache,
                           std::span<const double> known, std::span<const PromptId> prompts) {
  std::map<PromptId, double> extra;
  std::vector<double> values;
  values.reserve(prompts.size());
  for (PromptId x : prompts) {
    if (x < known.size() && !std::isnan(known[x])) {
      values.push_back(known[x]);
      continue;
    }
    auto it = extra.find(x);
    if (it == extra.end()) it = extra.emplace(x, exact_prompt(policy, cache, x).reward).first;
    values.push_back(it->second);
  }
  return pairwise_sum(values) / static_cast<double>(values.size());
}

std::size_t expected_batch_size(const RaftConfig& cfg) {
  return cfg.mode == RankingMode::Local ? cfg.b : cfg.b / cfg.k;
}

}  // namespace

StageResult run_stage(const RaftState& state, const RaftEnvironment& env, const RaftConfig& cfg,
                      const BatchSource& source) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  const std::uint64_t stage = state.stage + 1;
  const auto cache = state.cache ? state.cache : std::make_shared<const EvalCache>(env, state.reference);
  const auto prompts = sample_prompts(env.train_prompts, cfg.b, cfg.seed, stage);

  FilteredBatch batch;
  if (source) {
    batch = source(stage, prompts);
    if (batch.entries.empty()) throw DomainError("batch source returned no data");
  } else {
    const auto samples = collect(state.policy, prompts, cfg, *env.reward, &state.reference, stage);
    batch = rank(samples, cfg);
    if (batch.entries.size() != expected_batch_size(cfg)) {
      throw std::logic_error("filtered batch has the wrong size");
    }
  }

  const auto examples = batch.examples();
  const auto sft = sft_update(cfg.from_initial ? state.reference : state.policy, examples, cfg.lr,
                              cfg.epochs);
  auto ev = evaluate(sft.policy, *cache, env, cfg, stage);

  StageRecord rec;
  rec.stage = stage;
  rec.selection_reward = batch.mean_reward();
  rec.train_reward = batch_policy_reward(state.policy, *cache, state.prompt_reward, prompts);
  rec.test_reward = ev.report.mean_test_reward;
  rec.gold_reward = ev.gold_reward;
  rec.kl_to_initial = ev.report.kl_to_initial;
  rec.perplexity = ev.report.perplexity;
  rec.msttr_100 = ev.report.diversity.msttr_100;
  rec.distinct_1 = ev.report.diversity.distinct_1;
  rec.distinct_2 = ev.report.diversity.distinct_2;
  rec.unique_1 = ev.report.diversity.unique_1;
  rec.unique_2 = ev.report.diversity.unique_2;
  rec.mean_length = ev.report.diversity.mean_length;
  rec.batch_size = batch.entries.size();
  rec.sft_loss_start = sft.losses.front();
  rec.sft_loss_end = sft.losses.back();
  rec.sft_monotone = sft.monotone();
  rec.provenance = batch.provenance;
  rec.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  return StageResult{
      RaftState{sft.policy, state.reference, stage, cache, std::move(ev.prompt_reward)}, rec,
      std::move(batch)};
}

BatchSource fixed_teacher(Policy teacher, RewardPtr reward, RaftConfig cfg) {
  if (!reward) throw ConfigError("teacher needs a reward");
  cfg.validate();
  return [teacher = std::move(teacher), reward = std::move(reward), cfg](
             std::uint64_t stage, std::span<const PromptId> prompts) {
    // The teacher is its own reference, so the KL term vanishes.
    auto batch = rank(collect(teacher, prompts, cfg, *reward, &teacher, stage), cfg);
    batch.provenance = Provenance::Teacher;
    return batch;
  };
}

BatchSource lockstep_teacher(Policy teacher_initial, RaftEnvironment env, RaftConfig cfg) {
  env.validate(teacher_initial);
  cfg.validate();
  auto state = std::make_shared<RaftState>(RaftState{teacher_initial, teacher_initial, 0, {}, {}});
  return [state, env = std::move(env), cfg](std::uint64_t stage, std::span<const PromptId>) {
    if (stage != state->stage + 1) throw std::logic_error("lockstep teacher is out of step");
    auto result = run_stage(*state, env, cfg);
    *state = std::move(result.state);
    result.batch.provenance = Provenance::Teacher;
    return result.batch;
  };
}

bool converged(std::span<const double> history, double eps) {
  const std::size_t n = history.size();
  if (n < 5) return false;
  for (std::size_t t = n - 3; t < n; ++t) {
    const double mean = (history[t - 2] + history[t - 1] + history[t]) / 3.0;
    if (!(std::abs(history[t] - mean) < eps)) return false;
  }
  return true;
}

RunResult run_raft(const Policy& initial, const RaftEnvironment& env, const RaftConfig& cfg,
                   const BatchSource& source, const StageObserver& observer) {
  cfg.validate();
  env.validate(initial);
  const auto cache = std::make_shared<const EvalCache>(env, initial);
  RunResult result{evaluate(initial, *cache, env, cfg, 0), {}, initial, false, std::nullopt};
  RaftState state{initial, initial, 0, cache, result.initial.prompt_reward};
  std::vector<double> history{result.initial.report.mean_test_reward};
  for (std::size_t s = 0; s < cfg.max_stages; ++s) {
    auto step = run_stage(state, env, cfg, source);
    if (observer) observer(step);
    history.push_back(step.record.test_reward);
    result.records.push_back(step.record);
    state = std::move(step.state);
    if (converged(history, cfg.eps)) {
      result.converged = true;
      result.convergence_stage = state.stage;
      break;
    }
  }
  result.final_policy = state.policy;
  return result;
}

}  // namespace raftlab
