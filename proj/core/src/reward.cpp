#include "raftlab/reward.hpp"

#include <cmath>
#include <optional>
#include <random>
#include <string>

#include "raftlab/error.hpp"
#include "raftlab/numeric.hpp"
#include "raftlab/random.hpp"

namespace raftlab {

double RewardFn::query(PromptId x, ResponseId y, QueryKey) const { return score(x, y); }

void RewardFn::check(PromptId x, ResponseId y) const {
  if (x >= num_prompts()) throw DomainError("unknown prompt " + std::to_string(x));
  if (y >= num_responses()) throw DomainError("response " + std::to_string(y) + " out of range");
}

// ---------------------------------------------------------------------------
// RewardTable

RewardTable::RewardTable(std::size_t prompts, std::size_t responses, std::vector<double> values,
                         double bound)
    : prompts_(prompts), responses_(responses), bound_(bound), values_(std::move(values)) {
  if (prompts == 0 || responses == 0) throw ConfigError("reward table needs m, n >= 1");
  if (!(bound > 0.0) || !std::isfinite(bound)) throw ConfigError("reward bound must be positive and finite");
  if (values_.size() != prompts * responses) throw DomainError("reward table has wrong size");
  for (double v : values_) {
    if (!(v >= 0.0 && v <= bound)) throw DomainError("reward table entry outside [0, B]");
  }
}

RewardTable RewardTable::uniform(std::size_t prompts, std::size_t responses, double bound,
                                 std::uint64_t seed) {
  Rng rng(derive_seed({seed, stream::kWorld, 0x7574}));
  std::vector<double> values(prompts * responses);
  for (double& v : values) v = bound * uniform01(rng);
  return RewardTable(prompts, responses, std::move(values), bound);
}

RewardTable RewardTable::interaction(std::size_t prompts, std::size_t responses, double bound,
                                     std::uint64_t seed) {
  Rng rng(derive_seed({seed, stream::kWorld, 0x6974}));
  std::vector<double> additive(responses);
  for (double& a : additive) a = 0.5 * uniform01(rng);
  std::vector<double> values(prompts * responses);
  for (std::size_t x = 0; x < prompts; ++x) {
    for (std::size_t y = 0; y < responses; ++y) {
      values[x * responses + y] = bound * (additive[y] + 2.0 * uniform01(rng)) / 2.5;
    }
  }
  return RewardTable(prompts, responses, std::move(values), bound);
}

double RewardTable::score(PromptId x, ResponseId y) const {
  check(x, y);
  return values_[static_cast<std::size_t>(x) * responses_ + y];
}

TableDump RewardTable::dump() const {
  return TableDump{"reward-table",
                   {{"prompts", std::to_string(prompts_)},
                    {"responses", std::to_string(responses_)},
                    {"bound", format_double(bound_)}},
                   values_};
}

RewardTable RewardTable::from_dump(const TableDump& dump) {
  if (dump.kind != "reward-table") throw FormatError("table dump is not a reward table");
  return RewardTable(dump.attribute_u64("prompts"), dump.attribute_u64("responses"), dump.values,
                     dump.attribute_double("bound"));
}

// ---------------------------------------------------------------------------
// HammingReward

HammingReward::HammingReward(PromptSpace space) : space_(std::move(space)) {
  if (!space_.has_targets()) throw ConfigError("Hamming reward needs target sequences");
  responses_ = 1;
  for (std::size_t t = 0; t < space_.length(); ++t) responses_ *= space_.vocab();
}

double HammingReward::score(PromptId x, ResponseId y) const {
  check(x, y);
  const auto target = space_.target(x);
  const std::size_t V = space_.vocab();
  std::size_t matches = 0;
  for (std::size_t t = target.size(); t-- > 0;) {
    if (y % V == target[t]) ++matches;
    y /= V;
  }
  return static_cast<double>(matches) / static_cast<double>(target.size());
}

// ---------------------------------------------------------------------------
// Noise

void NoiseConfig::validate() const {
  if (mode < 1 || mode > 3) throw ConfigError("noise mode must be 1, 2 or 3");
  if (!(probability >= 0.0 && probability <= 1.0)) throw ConfigError("noise probability must lie in [0, 1]");
  if (!(stddev >= 0.0) || !std::isfinite(stddev)) throw ConfigError("noise std must be >= 0");
  if (mode != 1 && probability > 0.0 && offsets.empty()) throw ConfigError("noise offset menu is empty");
}

NoisyReward::NoisyReward(RewardPtr inner, NoiseConfig cfg) : inner_(std::move(inner)), cfg_(std::move(cfg)) {
  if (!inner_) throw ConfigError("noise wrapper needs a reward");
  cfg_.validate();
}

namespace {

std::optional<double> draw_offset(Rng& rng, const NoiseConfig& cfg) {
  if (!(uniform01(rng) < cfg.probability)) return std::nullopt;
  return cfg.offsets[uniform_index(rng, cfg.offsets.size())];
}

std::optional<double> prompt_corruption(const NoiseConfig& cfg, PromptId x, std::uint64_t stage) {
  const std::uint64_t key = cfg.redraw_offsets_each_stage ? stage : 0;
  Rng rng(derive_seed({cfg.seed, stream::kNoiseOffset, key, x}));
  return draw_offset(rng, cfg);
}

}  // namespace

double NoisyReward::prompt_offset(PromptId x, std::uint64_t stage) const {
  if (cfg_.mode != 2) return 0.0;
  return prompt_corruption(cfg_, x, stage).value_or(0.0);
}

double NoisyReward::query(PromptId x, ResponseId y, QueryKey key) const {
  const double r = inner_->score(x, y);
  Rng rng(derive_seed({cfg_.seed, stream::kNoise, key.stage, x, y, key.draw}));
  std::optional<double> mean;
  switch (cfg_.mode) {
    case 1:
      mean = 0.0;
      break;
    case 2:
      mean = prompt_corruption(cfg_, x, key.stage);
      break;
    default:
      mean = draw_offset(rng, cfg_);
      break;
  }
  if (!mean) return r;
  double noise = *mean;
  if (cfg_.stddev > 0.0) noise += std::normal_distribution<double>(0.0, cfg_.stddev)(rng);
  return r + noise;
}

// ---------------------------------------------------------------------------
// Recentering

RecenteredReward::RecenteredReward(RewardPtr inner, double baseline)
    : inner_(std::move(inner)), baseline_(baseline) {
  if (!inner_) throw ConfigError("recentering needs a reward");
  if (!std::isfinite(baseline)) throw ConfigError("baseline must be finite");
}

double RecenteredReward::bound() const { return inner_->bound() + std::abs(baseline_); }

double RecenteredReward::score(PromptId x, ResponseId y) const {
  return inner_->score(x, y) - baseline_;
}

double RecenteredReward::query(PromptId x, ResponseId y, QueryKey key) const {
  return inner_->query(x, y, key) - baseline_;
}

RewardPtr apply_noise(RewardPtr reward, NoiseConfig cfg) {
  return std::make_shared<NoisyReward>(std::move(reward), std::move(cfg));
}

RewardPtr recenter(RewardPtr reward, double baseline) {
  return std::make_shared<RecenteredReward>(std::move(reward), baseline);
}

// ---------------------------------------------------------------------------

std::vector<double> reward_row(const RewardFn& reward, PromptId x, std::uint64_t cap) {
  const std::uint64_t n = reward.num_responses();
  if (n > cap) throw EnumerationError("response space exceeds enumeration cap");
  if (x >= reward.num_prompts()) throw DomainError("unknown prompt " + std::to_string(x));
  std::vector<double> out(n);
  for (std::uint64_t y = 0; y < n; ++y) out[y] = reward.score(x, y);
  return out;
}

GreedyOptimum greedy_optimal(const RewardFn& reward, PromptId x, std::uint64_t cap) {
  const auto row = reward_row(reward, x, cap);
  GreedyOptimum best{0, row[0]};
  for (std::size_t y = 1; y < row.size(); ++y) {
    if (row[y] > best.reward) best = {y, row[y]};
  }
  return best;
}

double mean_greedy_optimum(const RewardFn& reward, std::uint64_t cap) {
  double total = 0.0;
  for (std::size_t x = 0; x < reward.num_prompts(); ++x) {
    total += greedy_optimal(reward, static_cast<PromptId>(x), cap).reward;
  }
  return total / static_cast<double>(reward.num_prompts());
}

}  // namespace raftlab
