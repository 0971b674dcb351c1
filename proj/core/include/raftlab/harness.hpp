#pragma once
// Experiment presets, run directories and plot-data export.
//
// Output tree of a preset run:
//
//   <out>/manifest.json                 runs in grid-then-seed order
//   <out>/aggregate.json                per grid point mean/std trajectories
//   <out>/<grid>/seed-<s>/config.txt    key=value echo
//   <out>/<grid>/seed-<s>/stages.csv
//   <out>/<grid>/seed-<s>/summary.json
//   <out>/<grid>/seed-<s>/policy.ckpt   final policy

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "raftlab/experiment.hpp"

namespace raftlab {

enum class Profile { Desk, Paper };
Profile parse_profile(const std::string& text);

struct GridPoint {
  std::string label;
  std::vector<std::pair<std::string, std::string>> overrides;
};

struct ExperimentPreset {
  std::string name;
  ExperimentConfig base;
  std::vector<GridPoint> grid;
  std::vector<std::uint64_t> seeds;

  void validate() const;
};

std::vector<std::string> preset_names();
std::vector<std::uint64_t> default_seeds();
/// Seeds from a comma-separated list; duplicates are rejected.
std::vector<std::uint64_t> parse_seeds(const std::string& text);

/// Built-in grid and base configuration for `name`. The profile sets b.
ExperimentPreset make_preset(const std::string& name, Profile profile = Profile::Desk,
                             std::vector<std::uint64_t> seeds = default_seeds());
void apply_profile(ExperimentConfig& cfg, Profile profile);

ExperimentConfig grid_config(const ExperimentConfig& base, const GridPoint& point,
                             std::uint64_t seed);

struct RunOutcome {
  std::string run_id;
  std::string grid_point;
  std::uint64_t seed = 0;
  bool ok = false;
  /// 0 converged, 2 stage budget exhausted, 1 failed.
  int exit_code = 1;
  std::string error;
  std::size_t stages = 0;
};

/// Runs one configuration and writes config.txt, stages.csv, summary.json and
/// policy.ckpt into `dir`. A relative teacher_ckpt resolves against `dir`.
RunOutcome execute_run(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                       bool with_wall_time = false);

struct PresetReport {
  std::vector<RunOutcome> runs;
  std::size_t failures() const;
};

/// RAFTLAB_THREADS, else the hardware concurrency (at least 1).
unsigned thread_budget();

/// One run per (grid point, seed); failures are recorded and the rest
/// proceed. Writes manifest.json and aggregate.json.
PresetReport run_preset(const ExperimentPreset& preset, const std::filesystem::path& out,
                        unsigned threads = 0);

/// run_preset plus overopt_plot.csv with proxy and gold rewards min-max
/// normalized across all runs.
PresetReport run_overopt(const ExperimentPreset& preset, const std::filesystem::path& out,
                         unsigned threads = 0);

/// Per seed: trains the teacher, then a teacher-fed and a self-fed student on
/// the student configuration. Grid points are teacher, teacher-fed, self-fed.
PresetReport run_distill(const ExperimentConfig& teacher, const ExperimentConfig& student,
                         const std::vector<std::uint64_t>& seeds,
                         const std::filesystem::path& out, unsigned threads = 0);

/// Default teacher configuration for distillation from a student base.
ExperimentConfig distill_teacher_config(const ExperimentConfig& student);

/// Long-format CSV (run_id, grid_point, seed, stage, metric, value) of every
/// run in the manifest, in manifest order then stage then column order.
void export_plotdata(const std::filesystem::path& dir, std::ostream& out);
/// Writes <dir>/plotdata.csv and returns its path.
std::filesystem::path export_plotdata(const std::filesystem::path& dir);

/// Metric columns exported per stage.
std::vector<std::string> plot_metrics();

}  // namespace raftlab
