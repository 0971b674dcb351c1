#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "raftlab/error.hpp"
#include "raftlab/harness.hpp"
#include "raftlab/stage_log.hpp"

using namespace raftlab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("raftlab-test-" + name);
  fs::remove_all(dir);
  return dir;
}

ExperimentPreset tiny_preset() {
  auto preset = make_preset("k_sweep", Profile::Desk, {1, 2});
  preset.base.m = 4;
  preset.base.n_or_v = 3;
  preset.base.length = 3;
  preset.base.raft.b = 16;
  preset.base.raft.max_stages = 3;
  preset.base.raft.eval_samples = 2;
  preset.grid.resize(2);
  return preset;
}

}  // namespace

TEST_CASE("presets and seeds") {
  for (const auto& name : preset_names()) CHECK_NOTHROW(make_preset(name).validate());
  CHECK_THROWS_AS(make_preset("nope"), ConfigError);
  CHECK(default_seeds().size() == 10);
  CHECK(parse_seeds("3,1,7") == std::vector<std::uint64_t>{3, 1, 7});
  CHECK_THROWS_AS(parse_seeds("1,1"), ConfigError);
  CHECK_THROWS_AS(parse_seeds("1,x"), ConfigError);
  CHECK(make_preset("single", Profile::Paper).base.raft.b == 2048);
  const auto k = make_preset("k_sweep");
  CHECK(grid_config(k.base, k.grid[2], 5).raft.k == 32);
  CHECK(grid_config(k.base, k.grid[2], 5).raft.seed == 5);
}

TEST_CASE("preset run writes the output tree") {
  const auto dir = scratch("tree");
  const auto preset = tiny_preset();
  const auto report = run_preset(preset, dir, 2);
  CHECK(report.failures() == 0);
  REQUIRE(report.runs.size() == 4);
  CHECK(fs::exists(dir / "manifest.json"));
  CHECK(fs::exists(dir / "aggregate.json"));
  for (const auto& run : report.runs) {
    const auto rd = dir / run.grid_point / ("seed-" + std::to_string(run.seed));
    for (const char* f : {"config.txt", "stages.csv", "summary.json", "policy.ckpt"}) {
      CHECK(fs::exists(rd / f));
    }
    std::ifstream csv(rd / "stages.csv");
    const auto records = read_stage_csv(csv);
    CHECK(records.size() == run.stages);
    const auto summary = nlohmann::json::parse(slurp(rd / "summary.json"));
    CHECK(summary["exit_code"] == run.exit_code);
    CHECK(summary["final"]["test_reward"].get<double>() == records.back().test_reward);
    CHECK(load_config(rd / "config.txt").raft.seed == run.seed);
  }

  // aggregate.json is recomputable from the stage logs.
  const auto agg = nlohmann::json::parse(slurp(dir / "aggregate.json"));
  const auto& point = preset.grid[0].label;
  std::vector<std::vector<StageRecord>> logs;
  for (std::uint64_t s : preset.seeds) {
    std::ifstream csv(dir / point / ("seed-" + std::to_string(s)) / "stages.csv");
    logs.push_back(read_stage_csv(csv));
  }
  const auto& entry = agg["grid"][0];
  CHECK(entry["grid_point"] == point);
  for (std::size_t s = 0; s < logs[0].size(); ++s) {
    const double a = logs[0][s].test_reward, b = logs[1][s].test_reward;
    const double mean = (a + b) / 2;
    const double sd = std::sqrt((a - mean) * (a - mean) + (b - mean) * (b - mean));
    CHECK(entry["metrics"]["test_reward"]["mean"][s].get<double>() == doctest::Approx(mean).epsilon(1e-14));
    CHECK(entry["metrics"]["test_reward"]["std"][s].get<double>() == doctest::Approx(sd).epsilon(1e-12));
  }
}

TEST_CASE("runs are byte-identical and export is deterministic") {
  const auto a = scratch("det-a"), b = scratch("det-b");
  const auto preset = tiny_preset();
  run_preset(preset, a, 1);
  run_preset(preset, b, 2);
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a);
    CHECK_MESSAGE(slurp(entry.path()) == slurp(b / rel), rel.string());
  }
  const auto pa = export_plotdata(a);
  const auto pb = export_plotdata(b);
  CHECK(slurp(pa) == slurp(pb));

  std::ostringstream again;
  export_plotdata(a, again);
  CHECK(again.str() == slurp(pa));

  std::istringstream lines(slurp(pa));
  std::string line;
  std::getline(lines, line);
  CHECK(line == "run_id,grid_point,seed,stage,metric,value");
  std::size_t rows = 0;
  while (std::getline(lines, line)) ++rows;
  std::size_t expect = 0;
  for (const auto& r : run_preset(preset, scratch("det-c"), 1).runs) expect += r.stages;
  CHECK(rows == expect * plot_metrics().size());
}

TEST_CASE("missing stage log is an export error") {
  const auto dir = scratch("missing");
  const auto preset = tiny_preset();
  const auto report = run_preset(preset, dir, 1);
  fs::remove(dir / report.runs[1].grid_point / ("seed-" + std::to_string(report.runs[1].seed)) / "stages.csv");
  std::ostringstream out;
  CHECK_THROWS(export_plotdata(dir, out));
}

TEST_CASE("a failing run is recorded and the rest proceed") {
  const auto dir = scratch("fail");
  auto preset = tiny_preset();
  preset.grid[1].overrides.push_back({"teacher_ckpt", "missing.ckpt"});
  const auto report = run_preset(preset, dir, 1);
  CHECK(report.failures() == 2);
  for (const auto& run : report.runs) {
    const auto rd = dir / run.grid_point / ("seed-" + std::to_string(run.seed));
    if (run.ok) {
      CHECK(fs::exists(rd / "stages.csv"));
    } else {
      CHECK(run.exit_code == 1);
      CHECK(fs::exists(rd / "error.txt"));
    }
  }
}
