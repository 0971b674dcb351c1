#include "raftlab/selftest.hpp"

#include <cmath>
#include <sstream>

#include "raftlab/bestofk.hpp"
#include "raftlab/experiment.hpp"
#include "raftlab/metrics.hpp"
#include "raftlab/numeric.hpp"
#include "raftlab/preference.hpp"
#include "raftlab/raft.hpp"
#include "raftlab/random.hpp"
#include "raftlab/stage_log.hpp"

namespace raftlab {

namespace {

struct Failure {
  std::string what;
};

void expect(bool condition, const std::string& what) {
  if (!condition) throw Failure{what};
}

std::vector<double> random_logits(Rng& rng, std::size_t count, double scale) {
  std::vector<double> v(count);
  for (double& x : v) x = scale * (2.0 * uniform01(rng) - 1.0);
  return v;
}

Policy random_bandit(Rng& rng, std::size_t m, std::size_t n) {
  return BanditPolicy(m, n, random_logits(rng, m * n, 3.0));
}

Policy random_seq(Rng& rng, std::size_t m, std::size_t v, std::size_t l) {
  const SeqPolicy shape(m, v, l);
  return SeqPolicy(m, v, l, random_logits(rng, shape.num_contexts() * v, 2.0));
}

void check_distributions() {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Policy p = trial % 2 ? random_bandit(rng, 3, 7) : random_seq(rng, 2, 3, 3);
    for (PromptId x = 0; x < num_prompts(p); ++x) {
      for (double lambda : {0.3, 1.0, 4.0}) {
        const auto d = exact_distribution(p, x, lambda);
        expect(std::abs(pairwise_sum(d) - 1.0) < 1e-9, "distribution does not sum to 1");
      }
      const auto d1 = exact_distribution(p, x, 1.0);
      for (ResponseId y = 0; y < d1.size(); ++y) {
        expect(std::abs(log_prob(p, x, y) - std::log(d1[y])) < 1e-9, "log_prob mismatch");
      }
    }
  }
}

void check_temperature_entropy() {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const Policy p = trial % 2 ? random_bandit(rng, 1, 9) : random_seq(rng, 1, 3, 3);
    double previous = -1.0;
    for (double lambda : {0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 4.0}) {
      const double h = entropy(exact_distribution(p, 0, lambda));
      expect(h >= previous - 1e-12, "entropy decreased with temperature");
      previous = h;
    }
  }
}

void check_sft_gradient() {
  Rng rng(13);
  const Policy p = BanditPolicy(4, 5, random_logits(rng, 20, 1.0));
  const std::vector<Example> batch{{0, 1}, {1, 4}, {1, 2}, {3, 0}};
  const auto grad = sft_gradient(p, batch);
  const auto base = logits(p);
  const double h = 1e-5;
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> up(base.begin(), base.end()), down(base.begin(), base.end());
    up[i] += h;
    down[i] -= h;
    const double fd =
        (sft_loss(with_logits(p, up), batch) - sft_loss(with_logits(p, down), batch)) / (2 * h);
    const double scale = std::max(std::abs(fd), 1e-3);
    expect(std::abs(fd - grad[i]) / scale < 1e-6, "SFT gradient differs from finite differences");
  }
  const auto step = sft_update(p, batch, 0.5, 20);
  expect(step.monotone(), "SFT loss increased at lr 0.5");
  expect(sft_update(p, batch, 0.0, 3).policy == p, "lr 0 changed the policy");
}

void check_bt_gradient() {
  Rng rng(14);
  const RewardTable gold = RewardTable::interaction(4, 6, 1.0, 3);
  const auto data = generate_comparisons(gold, 200, 5);
  for (Capacity c : {Capacity::Full, Capacity::Factorized}) {
    const BtRewardModel blank(c, 4, 6);
    const auto model = blank.with_params(random_logits(rng, blank.num_parameters(), 1.0));
    const auto grad = bt_gradient(model, data);
    const auto base = model.params();
    const double h = 1e-5;
    for (std::size_t i = 0; i < base.size(); ++i) {
      std::vector<double> up(base.begin(), base.end()), down(base.begin(), base.end());
      up[i] += h;
      down[i] -= h;
      const double fd =
          (bt_loss(model.with_params(up), data) - bt_loss(model.with_params(down), data)) / (2 * h);
      const double scale = std::max(std::abs(fd), 1e-3);
      expect(std::abs(fd - grad[i]) / scale < 1e-6, "BT gradient differs from finite differences");
    }
  }
}

void check_rewards() {
  const auto space = PromptSpace::random_targets(3, 3, 4, 7);
  const HammingReward hamming(space);
  for (PromptId x = 0; x < 3; ++x) {
    const SeqPolicy shape(3, 3, 4);
    const ResponseId target = shape.encode(space.target(x));
    for (ResponseId y = 0; y < hamming.num_responses(); ++y) {
      const double r = hamming.score(x, y);
      expect(r >= 0.0 && r <= 1.0, "Hamming reward out of range");
      expect((r == 1.0) == (y == target), "Hamming reward is 1 off target");
    }
  }
  const auto table = std::make_shared<RewardTable>(RewardTable::uniform(6, 5, 1.0, 2));
  NoiseConfig cfg;
  cfg.mode = 2;
  cfg.stddev = 0.0;
  cfg.probability = 0.5;
  const NoisyReward noisy(table, cfg);
  for (std::uint64_t stage = 0; stage < 4; ++stage) {
    for (PromptId x = 0; x < 6; ++x) {
      const double shift = noisy.prompt_offset(x, stage);
      for (ResponseId y = 0; y < 5; ++y) {
        expect(noisy.query(x, y, {stage, y}) == table->score(x, y) + shift,
               "mode-2 noise is not a per-prompt constant");
      }
    }
  }
  const auto data = generate_comparisons(*table, 500, 3);
  std::size_t total = 0;
  for (const auto& bin : calibration_curve(*table, data)) total += bin.count;
  expect(total == data.size(), "calibration bins do not partition the data");
}

std::vector<PromptSamples> random_samples(Rng& rng, std::size_t prompts, std::size_t k) {
  std::vector<PromptSamples> out(prompts);
  for (std::size_t i = 0; i < prompts; ++i) {
    out[i].prompt = static_cast<PromptId>(i % 5);
    for (std::size_t j = 0; j < k; ++j) {
      out[i].samples.push_back({uniform_index(rng, 100), std::floor(8 * uniform01(rng)) / 8,
                                -3 * uniform01(rng), -3 * uniform01(rng)});
    }
  }
  return out;
}

void check_ranking() {
  Rng rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    const auto samples = random_samples(rng, 16, 4);
    const auto batch = rank_local(samples, 0.0);
    expect(batch.entries.size() == samples.size(), "local batch size differs from b");
    for (const auto& transform : std::vector<std::function<double(double, std::size_t)>>{
             [](double r, std::size_t) { return 2 * r + 3; },
             [](double r, std::size_t) { return std::exp(r); },
             [](double r, std::size_t i) { return r + 0.37 * static_cast<double>(i); }}) {
      auto moved = samples;
      for (std::size_t i = 0; i < moved.size(); ++i) {
        for (auto& s : moved[i].samples) s.reward = transform(s.reward, i);
      }
      const auto other = rank_local(moved, 0.0);
      for (std::size_t i = 0; i < batch.entries.size(); ++i) {
        expect(other.entries[i].response == batch.entries[i].response,
               "local ranking changed under a monotone transform");
      }
    }
    const auto kl = rank_local(samples, 0.1);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      for (const auto& s : samples[i].samples) {
        expect(kl.entries[i].score >= modified_reward(s.reward, s.logp_current, s.logp_reference, 0.1),
               "selected modified reward is not maximal");
      }
    }
    RaftConfig cfg;
    cfg.b = 16;
    cfg.k = 4;
    cfg.mode = RankingMode::Global;
    expect(rank_global(random_samples(rng, 16, 1), cfg).entries.size() == 4,
           "global batch size differs from floor(b/K)");
  }
}

void check_best_of_k() {
  Rng rng(16);
  for (int trial = 0; trial < 200; ++trial) {
    const Policy p = random_bandit(rng, 1, 2 + uniform_index(rng, 12));
    const auto n = num_responses(p);
    std::vector<double> values(n);
    for (double& v : values) v = std::floor(4 * uniform01(rng)) / 4;
    const RewardTable reward(1, n, values, 1.0);
    double previous = -1.0;
    for (std::size_t k : {1, 2, 4, 8, 16, 32, 64}) {
      const auto report = bound_check(p, reward, 0, k);
      expect(report.expected_best >= previous, "best-of-K decreased in K");
      previous = report.expected_best;
    }
  }
}

void check_metrics() {
  Rng rng(17);
  const SeqPolicy uniform(2, 5, 3);
  const std::vector<Example> refs{{0, 3}, {1, 100}};
  expect(perplexity(uniform, refs).value == 5.0, "uniform perplexity differs from V");
  for (int trial = 0; trial < 100; ++trial) {
    const Policy a = random_seq(rng, 2, 2, 3);
    const Policy b = random_seq(rng, 2, 2, 3);
    const std::vector<PromptId> prompts{0, 1};
    expect(kl_to_reference(a, a, prompts).value == 0.0, "KL(p||p) is not 0");
    expect(kl_to_reference(a, b, prompts).value >= 0.0, "negative KL");
  }
  const std::vector<std::vector<Token>> abab{{0, 1, 0, 1}};
  const auto d = diversity(abab);
  expect(d.distinct_2 == 2.0 / 3.0 && d.unique_2 == 1, "bigram statistics differ from hand values");
}

void check_run_determinism() {
  ExperimentConfig cfg = ExperimentConfig::defaults("seq");
  cfg.m = 3;
  cfg.n_or_v = 3;
  cfg.length = 3;
  cfg.raft.b = 16;
  cfg.raft.max_stages = 3;
  cfg.raft.seed = 9;
  const auto run_once = [&] {
    const auto ex = make_experiment(cfg);
    const auto res = run_raft(ex.initial, ex.env, ex.raft);
    std::ostringstream out;
    write_stage_csv(out, res.records);
    for (const auto& r : res.records) {
      expect(r.selection_reward >= r.train_reward, "selection reward below the policy mean");
    }
    return out.str();
  };
  expect(run_once() == run_once(), "identical runs differ");
}

}  // namespace

std::vector<CheckResult> run_selftest(const std::function<void(const CheckResult&)>& progress) {
  const std::vector<std::pair<const char*, void (*)()>> checks = {
      {"distributions", check_distributions},
      {"temperature_entropy", check_temperature_entropy},
      {"sft_gradient", check_sft_gradient},
      {"bt_gradient", check_bt_gradient},
      {"rewards", check_rewards},
      {"ranking", check_ranking},
      {"best_of_k", check_best_of_k},
      {"metrics", check_metrics},
      {"run_determinism", check_run_determinism},
  };
  std::vector<CheckResult> results;
  for (const auto& [name, fn] : checks) {
    CheckResult r{name, true, {}};
    try {
      fn();
    } catch (const Failure& f) {
      r.passed = false;
      r.detail = f.what;
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("exception: ") + e.what();
    }
    if (progress) progress(r);
    results.push_back(r);
  }
  return results;
}

}  // namespace raftlab
