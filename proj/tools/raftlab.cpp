// raftlab command line: run, sweep, overopt, distill, export, selftest.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "raftlab/error.hpp"
#include "raftlab/harness.hpp"
#include "raftlab/selftest.hpp"

namespace fs = std::filesystem;
using namespace raftlab;

namespace {

struct Options {
  std::string config;
  std::string preset;
  std::string seeds;
  std::string out;
  std::string profile = "desk";
  bool timing = false;
};

ExperimentPreset preset_from(const std::string& name, const Options& opt) {
  const Profile profile = parse_profile(opt.profile);
  auto preset = make_preset(name, profile, opt.seeds.empty() ? default_seeds() : parse_seeds(opt.seeds));
  if (!opt.config.empty()) {
    preset.base = load_config(opt.config);
    apply_profile(preset.base, profile);
  }
  return preset;
}

int report(const PresetReport& r, const fs::path& out) {
  for (const auto& run : r.runs) {
    std::cout << run.run_id << ' ' << (run.ok ? "ok" : "FAILED") << " stages=" << run.stages;
    if (!run.ok) std::cout << " error=" << run.error;
    std::cout << '\n';
  }
  std::cout << r.runs.size() - r.failures() << '/' << r.runs.size() << " runs ok, output in "
            << out.string() << '\n';
  return r.failures() == 0 ? 0 : 1;
}

int cmd_run(const Options& opt) {
  if (opt.config.empty()) throw ConfigError("run needs --config");
  ExperimentConfig cfg = load_config(opt.config);
  if (!opt.seeds.empty()) {
    const auto seeds = parse_seeds(opt.seeds);
    if (seeds.size() != 1) throw ConfigError("run takes a single seed");
    cfg.raft.seed = seeds.front();
  }
  if (opt.profile != "desk" || !opt.preset.empty()) {
    throw ConfigError("run takes --config, --seeds and --out only");
  }
  const fs::path out = opt.out.empty() ? fs::path("runs/single") : fs::path(opt.out);
  if (!cfg.teacher_ckpt.empty() && cfg.teacher_ckpt != "lockstep" &&
      fs::path(cfg.teacher_ckpt).is_relative()) {
    // Relative checkpoints in a config file are relative to the file.
    cfg.teacher_ckpt = fs::relative(fs::absolute(fs::path(opt.config).parent_path() / cfg.teacher_ckpt),
                                    fs::absolute(out))
                           .string();
  }
  const auto outcome = execute_run(cfg, out, opt.timing);
  if (!outcome.ok) {
    std::cerr << "run failed: " << outcome.error << '\n';
    return 1;
  }
  std::cout << "stages=" << outcome.stages << (outcome.exit_code == 0 ? " converged" : " budget exhausted")
            << ", output in " << out.string() << '\n';
  return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward-ranked fine-tuning laboratory"};
  app.require_subcommand(1);
  Options opt;

  const auto add_common = [&opt](CLI::App* cmd) {
    cmd->add_option("--config", opt.config, "key=value run configuration");
    cmd->add_option("--seeds", opt.seeds, "comma-separated seed list");
    cmd->add_option("--out", opt.out, "output directory");
    cmd->add_option("--profile", opt.profile, "desk or paper")->check(CLI::IsMember({"desk", "paper"}));
  };

  auto* run = app.add_subcommand("run", "run one configuration");
  add_common(run);
  run->add_flag("--timing", opt.timing, "append wall_time to the stage log");
  auto* sweep = app.add_subcommand("sweep", "run a preset over its grid and seeds");
  add_common(sweep);
  sweep->add_option("--preset", opt.preset, "preset name")->required();
  auto* overopt = app.add_subcommand("overopt", "proxy-vs-gold over-optimization study");
  add_common(overopt);
  auto* distill = app.add_subcommand("distill", "teacher-fed vs self-fed students");
  add_common(distill);
  auto* exp = app.add_subcommand("export", "write long-format plotdata.csv for a run directory");
  exp->add_option("--out", opt.out, "directory written by sweep, overopt or distill")->required();
  auto* selftest = app.add_subcommand("selftest", "run the invariant suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(opt);
    if (sweep->parsed() || overopt->parsed() || distill->parsed()) {
      const std::string name = sweep->parsed() ? opt.preset : overopt->parsed() ? "overopt" : "distill";
      const auto preset = preset_from(name, opt);
      const fs::path out = opt.out.empty() ? fs::path("runs") / name : fs::path(opt.out);
      return report(run_preset(preset, out), out);
    }
    if (exp->parsed()) {
      std::cout << export_plotdata(opt.out).string() << '\n';
      return 0;
    }
    if (selftest->parsed()) {
      bool ok = true;
      run_selftest([&ok](const CheckResult& r) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name;
        if (!r.passed) std::cout << ": " << r.detail;
        std::cout << std::endl;
        ok = ok && r.passed;
      });
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
