#include <benchmark/benchmark.h>

#include "raftlab/bestofk.hpp"
#include "raftlab/experiment.hpp"
#include "raftlab/metrics.hpp"
#include "raftlab/raft.hpp"

using namespace raftlab;

static void BM_SampleSeq(benchmark::State& state) {
  const Policy p = SeqPolicy(8, 8, 6);
  const ResponseSampler sampler(p, 1.0);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sampler.draw(3, static_cast<std::size_t>(state.range(0)), ++seed));
}
BENCHMARK(BM_SampleSeq)->Arg(8)->Arg(32);

static void BM_SftStep(benchmark::State& state) {
  const Policy p = SeqPolicy(8, 8, 6);
  std::vector<Example> batch;
  for (std::size_t i = 0; i < 256; ++i) batch.push_back({static_cast<PromptId>(i % 8), i * 977 % 262144});
  for (auto _ : state) benchmark::DoNotOptimize(sft_update(p, batch, 2.0, 1));
}
BENCHMARK(BM_SftStep);

static void BM_ExpectedBestOfK(benchmark::State& state) {
  const Policy p = BanditPolicy(1, 32);
  const auto table = RewardTable::uniform(1, 32, 1.0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(expected_best_of_k_exact(p, table, 0, 16, 1.0));
}
BENCHMARK(BM_ExpectedBestOfK);

static void BM_Stage(benchmark::State& state) {
  auto cfg = ExperimentConfig::defaults(state.range(0) ? "seq" : "bandit");
  const auto ex = make_experiment(cfg);
  const RaftState start{ex.initial, ex.initial, 0, std::make_shared<const EvalCache>(ex.env, ex.initial), {}};
  for (auto _ : state) benchmark::DoNotOptimize(run_stage(start, ex.env, ex.raft));
}
BENCHMARK(BM_Stage)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
