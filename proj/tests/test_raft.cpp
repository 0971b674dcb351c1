#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "oracle.hpp"
#include "raftlab/error.hpp"
#include "raftlab/raft.hpp"
#include "raftlab/stage_log.hpp"

using namespace raftlab;

namespace {

ScoredSample scored(ResponseId y, double r) { return ScoredSample{y, r, 0.0, 0.0}; }

RaftEnvironment bandit_env(std::size_t m, std::size_t n, std::uint64_t seed) {
  RaftEnvironment env;
  env.reward = std::make_shared<RewardTable>(RewardTable::uniform(m, n, 1.0, seed));
  for (std::size_t x = 0; x < m; ++x) {
    env.train_prompts.push_back(static_cast<PromptId>(x));
    env.test_prompts.push_back(static_cast<PromptId>(x));
    env.reference_set.push_back({static_cast<PromptId>(x), greedy_optimal(*env.reward, static_cast<PromptId>(x)).response});
  }
  return env;
}

RaftConfig small_cfg() {
  RaftConfig cfg;
  cfg.b = 32;
  cfg.k = 4;
  cfg.max_stages = 6;
  cfg.eps = 1e-12;
  cfg.seed = 11;
  cfg.eval_samples = 4;
  return cfg;
}

}  // namespace

TEST_CASE("modified reward hand values") {
  CHECK(modified_reward(1.0, std::log(0.5), std::log(0.25), 0.0) == 1.0);
  CHECK(modified_reward(1.0, -1.0, -2.0, 0.1) == doctest::Approx(0.9));
  CHECK(modified_reward(0.3, -2.0, -1.0, 0.5) == doctest::Approx(0.8));
}

TEST_CASE("local ranking picks the argmax with ties to the first draw") {
  const std::vector<PromptSamples> s{{0, {scored(5, 0.2), scored(6, 0.8), scored(7, 0.5)}},
                                     {1, {scored(1, 0.4), scored(2, 0.4)}}};
  const auto batch = rank_local(s, 0.0);
  REQUIRE(batch.entries.size() == 2);
  CHECK(batch.entries[0].response == 6);
  CHECK(batch.entries[1].response == 1);
  CHECK(batch.mean_reward() == doctest::Approx(0.6));
}

TEST_CASE("local ranking is invariant to positive affine reward maps") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PromptSamples> a(5), b(5);
    for (std::size_t i = 0; i < 5; ++i) {
      a[i].prompt = b[i].prompt = static_cast<PromptId>(i);
      for (ResponseId y = 0; y < 6; ++y) {
        const double r = std::floor(8 * u(rng)) / 8;
        a[i].samples.push_back(scored(y, r));
        b[i].samples.push_back(scored(y, 2 * r + 3));
      }
    }
    const auto ea = rank_local(a, 0.0).entries, eb = rank_local(b, 0.0).entries;
    for (std::size_t i = 0; i < 5; ++i) CHECK(ea[i].response == eb[i].response);
  }
}

TEST_CASE("KL penalty can flip the local choice") {
  // y=0: r=1.0, current logp -0.1, reference -3 -> 1 - 0.5 * 2.9 = -0.45
  // y=1: r=0.8, current logp -2.5, reference -2 -> 0.8 + 0.25 = 1.05
  const std::vector<PromptSamples> s{{0, {{0, 1.0, -0.1, -3.0}, {1, 0.8, -2.5, -2.0}}}};
  CHECK(rank_local(s, 0.0).entries[0].response == 0);
  const auto kl = rank_local(s, 0.5).entries[0];
  CHECK(kl.response == 1);
  CHECK(kl.reward == 0.8);
  CHECK(kl.score == doctest::Approx(1.05));
}

TEST_CASE("global ranking keeps the top floor(b/K)") {
  RaftConfig cfg;
  cfg.b = 8;
  cfg.k = 4;
  cfg.mode = RankingMode::Global;
  std::vector<PromptSamples> s;
  for (PromptId x = 0; x < 8; ++x) s.push_back({x, {scored(x, static_cast<double>(x))}});
  const auto batch = rank_global(s, cfg);
  REQUIRE(batch.entries.size() == 2);
  CHECK(batch.entries[0].reward == 7.0);
  CHECK(batch.entries[1].reward == 6.0);

  // Equal scores keep slot order.
  std::vector<PromptSamples> tied;
  for (PromptId x = 0; x < 8; ++x) tied.push_back({x, {scored(10 + x, 1.0)}});
  const auto t = rank_global(tied, cfg);
  CHECK(t.entries[0].prompt == 0);
  CHECK(t.entries[1].prompt == 1);

  cfg.b = 3;
  CHECK_THROWS_AS(rank_global(tied, cfg), ConfigError);
}

TEST_CASE("global ranking matches a sort oracle") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 1);
  RaftConfig cfg;
  cfg.b = 40;
  cfg.k = 8;
  cfg.mode = RankingMode::Global;
  std::vector<PromptSamples> s;
  std::vector<double> all;
  for (PromptId x = 0; x < 40; ++x) {
    const double r = u(rng);
    s.push_back({x, {scored(0, r)}});
    all.push_back(r);
  }
  std::sort(all.rbegin(), all.rend());
  const auto batch = rank_global(s, cfg);
  REQUIRE(batch.entries.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(batch.entries[i].reward == all[i]);
}

TEST_CASE("prompt sampling is reproducible and draws from the pool") {
  const std::vector<PromptId> pool{3, 5, 9};
  const auto a = sample_prompts(pool, 100, 4, 2);
  CHECK(a == sample_prompts(pool, 100, 4, 2));
  CHECK(a != sample_prompts(pool, 100, 4, 3));
  for (PromptId x : a) CHECK(std::find(pool.begin(), pool.end(), x) != pool.end());
}

TEST_CASE("collect uses K draws locally and one globally") {
  const auto env = bandit_env(4, 6, 2);
  const Policy p = BanditPolicy(4, 6);
  auto cfg = small_cfg();
  const std::vector<PromptId> prompts{0, 1, 1, 3};
  const auto local = collect(p, prompts, cfg, *env.reward, nullptr, 1);
  for (const auto& ps : local) CHECK(ps.samples.size() == 4);
  cfg.mode = RankingMode::Global;
  const auto global = collect(p, prompts, cfg, *env.reward, nullptr, 1);
  for (const auto& ps : global) CHECK(ps.samples.size() == 1);
  cfg.beta = 0.1;
  CHECK_THROWS_AS(collect(p, prompts, cfg, *env.reward, nullptr, 1), ConfigError);
}

TEST_CASE("convergence rule") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_FALSE(converged(std::vector<double>{0, 0, 0, 0}, inf));
  CHECK(converged(std::vector<double>{0, 0, 0, 0, 0}, inf));
  CHECK(converged(std::vector<double>{0, 1, 1, 1, 1}, 0.5));
  CHECK_FALSE(converged(std::vector<double>{0, 1, 1, 1, 2}, 0.5));
  CHECK_FALSE(converged(std::vector<double>{1, 1, 1, 1, 1}, 0.0));
}

TEST_CASE("eps = inf stops after four stages; T = 1 runs one") {
  const auto env = bandit_env(4, 6, 2);
  auto cfg = small_cfg();
  cfg.eps = std::numeric_limits<double>::infinity();
  const auto r = run_raft(BanditPolicy(4, 6), env, cfg);
  CHECK(r.converged);
  CHECK(r.records.size() == 4);
  CHECK(*r.convergence_stage == 4);

  cfg.eps = 1e-12;
  cfg.max_stages = 1;
  const auto one = run_raft(BanditPolicy(4, 6), env, cfg);
  CHECK_FALSE(one.converged);
  REQUIRE(one.records.size() == 1);
  CHECK(one.records[0].stage == 1);
  CHECK(one.records[0].batch_size == 32);
}

TEST_CASE("stage records are internally consistent") {
  const auto env = bandit_env(4, 6, 5);
  const auto cfg = small_cfg();
  const auto r = run_raft(BanditPolicy(4, 6), env, cfg);
  REQUIRE(r.records.size() == 6);
  // Uniform stage-0 policy: exact reward is the table mean.
  const PromptId all[] = {0, 1, 2, 3};
  CHECK(r.records[0].train_reward >= 0.0);
  CHECK(r.initial.report.mean_test_reward == doctest::Approx(mean_test_reward(BanditPolicy(4, 6), *env.reward, all)).epsilon(1e-14));
  CHECK(r.records.back().test_reward == doctest::Approx(mean_test_reward(r.final_policy, *env.reward, all)).epsilon(1e-13));
  for (const auto& rec : r.records) {
    CHECK(rec.provenance == Provenance::Own);
    CHECK(rec.batch_size == cfg.b);
    CHECK(rec.sft_loss_end <= rec.sft_loss_start);
    CHECK(rec.kl_to_initial >= 0.0);
  }
  CHECK(r.records.back().test_reward > r.initial.report.mean_test_reward);
  // Determinism.
  const auto again = run_raft(BanditPolicy(4, 6), env, cfg);
  CHECK(std::get<BanditPolicy>(again.final_policy) == std::get<BanditPolicy>(r.final_policy));
}

TEST_CASE("teacher batches carry teacher provenance") {
  const auto env = bandit_env(4, 6, 5);
  const auto cfg = small_cfg();
  const Policy teacher = BanditPolicy(4, 6, std::vector<double>(24, 0.5));
  const auto r = run_raft(BanditPolicy(4, 6), env, cfg, fixed_teacher(teacher, env.reward, cfg));
  for (const auto& rec : r.records) CHECK(rec.provenance == Provenance::Teacher);
}

TEST_CASE("a lockstep teacher reproduces its own run") {
  const auto env = bandit_env(4, 6, 7);
  auto cfg = small_cfg();
  const Policy init = BanditPolicy(4, 6);
  const auto solo = run_raft(init, env, cfg);
  const auto source = lockstep_teacher(init, env, cfg);
  const auto student = run_raft(init, env, cfg, source);
  // Same config and same initial policy: the student sees exactly the
  // teacher's batches, which are the solo run's own batches.
  CHECK(std::get<BanditPolicy>(student.final_policy) == std::get<BanditPolicy>(solo.final_policy));
  for (std::size_t i = 0; i < solo.records.size(); ++i) {
    CHECK(student.records[i].selection_reward == solo.records[i].selection_reward);
    CHECK(student.records[i].provenance == Provenance::Teacher);
  }
}

TEST_CASE("a throwing stage leaves the input state intact") {
  const auto env = bandit_env(4, 6, 7);
  const auto cfg = small_cfg();
  const Policy init = BanditPolicy(4, 6, std::vector<double>(24, 0.25));
  const RaftState state{init, init, 0, {}, {}};
  const BatchSource bad = [](std::uint64_t, std::span<const PromptId>) {
    return FilteredBatch{{{0, 99, 1.0, 1.0}}, Provenance::Teacher};
  };
  CHECK_THROWS(run_stage(state, env, cfg, bad));
  CHECK(std::get<BanditPolicy>(state.policy) == std::get<BanditPolicy>(init));
  CHECK(state.stage == 0);
  const BatchSource empty = [](std::uint64_t, std::span<const PromptId>) { return FilteredBatch{}; };
  CHECK_THROWS_AS(run_stage(state, env, cfg, empty), DomainError);
}

TEST_CASE("stage CSV round trip") {
  const auto env = bandit_env(4, 6, 5);
  const auto r = run_raft(BanditPolicy(4, 6), env, small_cfg());
  std::ostringstream out;
  write_stage_csv(out, r.records);
  std::istringstream in(out.str());
  const auto back = read_stage_csv(in);
  REQUIRE(back.size() == r.records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    for (const auto& col : stage_columns()) {
      CHECK(stage_metric(back[i], col) == stage_metric(r.records[i], col));
    }
  }
  std::ostringstream again;
  write_stage_csv(again, back);
  CHECK(again.str() == out.str());
  CHECK(out.str().rfind("stage,", 0) == 0);

  std::istringstream bad("stage\n1\n");
  CHECK_THROWS_AS(read_stage_csv(bad), FormatError);
}
