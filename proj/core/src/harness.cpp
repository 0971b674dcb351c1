#include "raftlab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "raftlab/checkpoint.hpp"
#include "raftlab/error.hpp"
#include "raftlab/numeric.hpp"
#include "raftlab/stage_log.hpp"

namespace raftlab {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

Profile parse_profile(const std::string& text) {
  if (text == "desk") return Profile::Desk;
  if (text == "paper") return Profile::Paper;
  throw ConfigError("profile must be desk or paper, got '" + text + "'");
}

void ExperimentPreset::validate() const {
  if (grid.empty()) throw ConfigError("preset '" + name + "' has an empty grid");
  if (seeds.empty()) throw ConfigError("preset '" + name + "' has no seeds");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("preset seeds must be distinct");
  }
  std::set<std::string> labels;
  for (const auto& g : grid) {
    if (!labels.insert(g.label).second) throw ConfigError("duplicate grid label " + g.label);
  }
}

std::vector<std::string> preset_names() {
  return {"k_sweep", "temp_sweep", "kl_sweep", "noise", "overopt", "distill", "single"};
}

std::vector<std::uint64_t> default_seeds() { return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}; }

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    std::uint64_t v = 0;
    try {
      if (!item.empty() && item[0] != '-') v = std::stoull(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError("bad seed '" + item + "'");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw ConfigError("empty seed list");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds must be distinct");
  }
  return seeds;
}

void apply_profile(ExperimentConfig& cfg, Profile profile) {
  cfg.raft.b = profile == Profile::Paper ? 2048 : 256;
}

ExperimentPreset make_preset(const std::string& name, Profile profile,
                             std::vector<std::uint64_t> seeds) {
  ExperimentPreset p{name, ExperimentConfig::defaults("seq"), {}, std::move(seeds)};
  if (name == "k_sweep") {
    for (const char* k : {"8", "16", "32"}) p.grid.push_back({std::string("K") + k, {{"K", k}}});
  } else if (name == "temp_sweep") {
    for (const char* l : {"0.7", "0.85", "1"}) {
      p.grid.push_back({std::string("lambda") + l, {{"lambda", l}}});
    }
  } else if (name == "kl_sweep") {
    for (const char* b : {"0", "0.005", "0.01", "0.1"}) {
      p.grid.push_back({std::string("beta") + b, {{"beta", b}}});
    }
  } else if (name == "noise") {
    p.base = ExperimentConfig::defaults("bandit");
    p.base.reward = RewardSpec::parse("uniform:B=4");
    p.base.raft.k = 32;
    p.grid.push_back({"noiseless", {{"noise_mode", "0"}}});
    for (const char* mode : {"1", "2", "3"}) {
      p.grid.push_back({std::string("mode") + mode, {{"noise_mode", mode}}});
    }
  } else if (name == "overopt") {
    p.base = ExperimentConfig::defaults("bandit");
    p.base.reward = RewardSpec::parse("proxy:init=3");
    // Run the whole budget: the gold peak only shows after the proxy plateau.
    p.base.eps = 1e-9;
    p.grid.push_back({"proxy", {}});
  } else if (name == "distill") {
    p.grid.push_back({"teacher", {}});
    p.grid.push_back({"teacher-fed", {}});
    p.grid.push_back({"self-fed", {}});
  } else if (name == "single") {
    p.grid.push_back({"base", {}});
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  apply_profile(p.base, profile);
  p.validate();
  return p;
}

ExperimentConfig grid_config(const ExperimentConfig& base, const GridPoint& point,
                             std::uint64_t seed) {
  ExperimentConfig cfg = base;
  for (const auto& [key, value] : point.overrides) set_config_value(cfg, key, value);
  cfg.raft.seed = seed;
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------------------
// Single runs

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << text;
  if (!out) throw FormatError("failed writing " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Json number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

Json record_json(const StageRecord& r) {
  Json j;
  for (const auto& col : stage_columns()) {
    if (col == "provenance") {
      j[col] = to_string(r.provenance);
    } else if (col == "sft_monotone") {
      j[col] = r.sft_monotone;
    } else if (col == "stage" || col == "unique_1" || col == "unique_2" || col == "batch_size") {
      j[col] = static_cast<std::uint64_t>(stage_metric(r, col));
    } else {
      j[col] = number(stage_metric(r, col));
    }
  }
  return j;
}

Json evaluation_json(const Evaluation& e) {
  Json j;
  j["test_reward"] = number(e.report.mean_test_reward);
  j["gold_reward"] = number(e.gold_reward);
  j["kl_to_initial"] = number(e.report.kl_to_initial);
  j["perplexity"] = number(e.report.perplexity);
  j["msttr_100"] = number(e.report.diversity.msttr_100);
  j["distinct_1"] = number(e.report.diversity.distinct_1);
  j["distinct_2"] = number(e.report.diversity.distinct_2);
  j["unique_1"] = e.report.diversity.unique_1;
  j["unique_2"] = e.report.diversity.unique_2;
  j["mean_length"] = number(e.report.diversity.mean_length);
  return j;
}

Json config_json(const ExperimentConfig& cfg) {
  Json j = Json::object();
  std::istringstream in(config_text(cfg));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    j[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return j;
}

}  // namespace

RunOutcome execute_run(const ExperimentConfig& cfg, const fs::path& dir, bool with_wall_time) {
  RunOutcome outcome;
  outcome.seed = cfg.raft.seed;
  try {
    fs::create_directories(dir);
    write_text(dir / "config.txt", config_text(cfg));
    ExperimentConfig resolved = cfg;
    if (!cfg.teacher_ckpt.empty() && cfg.teacher_ckpt != "lockstep" &&
        fs::path(cfg.teacher_ckpt).is_relative()) {
      resolved.teacher_ckpt = (dir / cfg.teacher_ckpt).lexically_normal().string();
    }
    const Experiment ex = make_experiment(resolved);
    const RunResult res = run_raft(ex.initial, ex.env, ex.raft, ex.source);

    std::ostringstream csv;
    write_stage_csv(csv, res.records, with_wall_time);
    write_text(dir / "stages.csv", csv.str());
    save_policy(dir / "policy.ckpt", res.final_policy);

    Json summary;
    summary["config"] = config_json(cfg);
    summary["converged"] = res.converged;
    summary["convergence_stage"] =
        res.convergence_stage ? Json(*res.convergence_stage) : Json(nullptr);
    summary["exit_code"] = res.converged ? 0 : 2;
    summary["stages"] = res.records.size();
    summary["initial"] = evaluation_json(res.initial);
    summary["final"] = record_json(res.records.back());
    if (ex.proxy) {
      summary["proxy"] = {{"train_accuracy", number(ex.proxy->train_accuracy)},
                          {"holdout_accuracy", number(ex.proxy->holdout_accuracy)},
                          {"final_loss", number(ex.proxy->final_loss)}};
    }
    write_text(dir / "summary.json", summary.dump(2) + "\n");

    outcome.ok = true;
    outcome.exit_code = res.converged ? 0 : 2;
    outcome.stages = res.records.size();
  } catch (const std::exception& e) {
    outcome.ok = false;
    outcome.exit_code = 1;
    outcome.error = e.what();
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream(dir / "error.txt") << e.what() << '\n';
  }
  return outcome;
}

// ---------------------------------------------------------------------------
// Presets

std::size_t PresetReport::failures() const {
  return static_cast<std::size_t>(
      std::count_if(runs.begin(), runs.end(), [](const RunOutcome& r) { return !r.ok; }));
}

unsigned thread_budget() {
  if (const char* env = std::getenv("RAFTLAB_THREADS")) {
    const std::string text(env);
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(text, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size() || v == 0) {
      throw ConfigError("RAFTLAB_THREADS must be a positive integer");
    }
    return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

struct Job {
  std::string run_id;
  std::string grid_point;
  ExperimentConfig cfg;
};

std::string seed_dir(std::uint64_t seed) { return "seed-" + std::to_string(seed); }

std::vector<RunOutcome> run_jobs(const std::vector<Job>& jobs, const fs::path& out,
                                 unsigned threads) {
  std::vector<RunOutcome> outcomes(jobs.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      outcomes[i] = execute_run(jobs[i].cfg, out / jobs[i].run_id);
      outcomes[i].run_id = jobs[i].run_id;
      outcomes[i].grid_point = jobs[i].grid_point;
    }
  };
  const unsigned n = std::min<std::size_t>(threads ? threads : thread_budget(), jobs.size());
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
  }
  return outcomes;
}

void write_manifest(const std::string& preset, const std::vector<RunOutcome>& runs,
                    const fs::path& out) {
  Json j;
  j["preset"] = preset;
  j["runs"] = Json::array();
  for (const auto& r : runs) {
    Json e;
    e["run_id"] = r.run_id;
    e["grid_point"] = r.grid_point;
    e["seed"] = r.seed;
    e["status"] = r.ok ? "ok" : "failed";
    e["exit_code"] = r.exit_code;
    if (!r.ok) e["error"] = r.error;
    j["runs"].push_back(e);
  }
  write_text(out / "manifest.json", j.dump(2) + "\n");
}

std::vector<StageRecord> load_stages(const fs::path& run_dir) {
  std::ifstream in(run_dir / "stages.csv");
  if (!in) throw FormatError("missing stage log in " + run_dir.string());
  return read_stage_csv(in);
}

void write_aggregate(const std::string& preset, const std::vector<RunOutcome>& runs,
                     const fs::path& out) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::vector<StageRecord>>> by_point;
  for (const auto& r : runs) {
    if (!by_point.count(r.grid_point)) order.push_back(r.grid_point);
    auto& bucket = by_point[r.grid_point];
    if (r.ok) bucket.push_back(load_stages(out / r.run_id));
  }
  Json j;
  j["preset"] = preset;
  j["grid"] = Json::array();
  for (const auto& label : order) {
    const auto& trajectories = by_point[label];
    std::size_t stages = 0;
    for (const auto& t : trajectories) stages = std::max(stages, t.size());
    Json point;
    point["grid_point"] = label;
    point["runs"] = trajectories.size();
    Json metrics;
    for (const auto& metric : plot_metrics()) {
      Json count = Json::array(), mean = Json::array(), stdev = Json::array();
      for (std::size_t s = 0; s < stages; ++s) {
        std::vector<double> v;
        for (const auto& t : trajectories) {
          if (s < t.size()) v.push_back(stage_metric(t[s], metric));
        }
        const double mu = pairwise_sum(v) / static_cast<double>(v.size());
        std::vector<double> sq;
        for (double x : v) sq.push_back((x - mu) * (x - mu));
        const double sd = v.size() > 1 ? std::sqrt(pairwise_sum(sq) / static_cast<double>(v.size() - 1)) : 0.0;
        count.push_back(v.size());
        mean.push_back(number(mu));
        stdev.push_back(number(sd));
      }
      metrics[metric] = {{"count", count}, {"mean", mean}, {"std", stdev}};
    }
    point["metrics"] = metrics;
    j["grid"].push_back(point);
  }
  write_text(out / "aggregate.json", j.dump(2) + "\n");
}

PresetReport run_grid(const ExperimentPreset& preset, const fs::path& out, unsigned threads) {
  preset.validate();
  std::vector<Job> jobs;
  for (const auto& point : preset.grid) {
    for (std::uint64_t seed : preset.seeds) {
      jobs.push_back({point.label + "/" + seed_dir(seed), point.label,
                      grid_config(preset.base, point, seed)});
    }
  }
  fs::create_directories(out);
  PresetReport report{run_jobs(jobs, out, threads)};
  write_manifest(preset.name, report.runs, out);
  write_aggregate(preset.name, report.runs, out);
  return report;
}

void write_overopt_plot(const std::vector<RunOutcome>& runs, const fs::path& out) {
  struct Row {
    std::string run_id;
    std::uint64_t seed;
    std::uint64_t stage;
    double proxy;
    double gold;
  };
  std::vector<Row> rows;
  for (const auto& r : runs) {
    if (!r.ok) continue;
    const auto summary = Json::parse(read_text(out / r.run_id / "summary.json"));
    rows.push_back({r.run_id, r.seed, 0, summary["initial"]["test_reward"].get<double>(),
                    summary["initial"]["gold_reward"].get<double>()});
    for (const auto& rec : load_stages(out / r.run_id)) {
      rows.push_back({r.run_id, r.seed, rec.stage, rec.test_reward, rec.gold_reward});
    }
  }
  const auto normalizer = [&](double Row::*field) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& row : rows) {
      lo = std::min(lo, row.*field);
      hi = std::max(hi, row.*field);
    }
    return [lo, hi](double v) { return hi > lo ? (v - lo) / (hi - lo) : 0.0; };
  };
  const auto norm_proxy = normalizer(&Row::proxy);
  const auto norm_gold = normalizer(&Row::gold);
  std::ostringstream csv;
  csv << "run_id,seed,stage,proxy_reward,gold_reward,proxy_normalized,gold_normalized\n";
  for (const auto& row : rows) {
    csv << row.run_id << ',' << row.seed << ',' << row.stage << ',' << format_double(row.proxy)
        << ',' << format_double(row.gold) << ',' << format_double(norm_proxy(row.proxy)) << ','
        << format_double(norm_gold(row.gold)) << '\n';
  }
  write_text(out / "overopt_plot.csv", csv.str());
}

}  // namespace

PresetReport run_preset(const ExperimentPreset& preset, const fs::path& out, unsigned threads) {
  if (preset.name == "distill") {
    return run_distill(distill_teacher_config(preset.base), preset.base, preset.seeds, out, threads);
  }
  if (preset.name == "overopt") return run_overopt(preset, out, threads);
  return run_grid(preset, out, threads);
}

PresetReport run_overopt(const ExperimentPreset& preset, const fs::path& out, unsigned threads) {
  if (preset.base.reward.kind != "proxy") {
    throw ConfigError("over-optimization study needs a proxy reward");
  }
  auto report = run_grid(preset, out, threads);
  write_overopt_plot(report.runs, out);
  return report;
}

ExperimentConfig distill_teacher_config(const ExperimentConfig& student) {
  ExperimentConfig teacher = student;
  teacher.raft.k = 32;
  teacher.teacher_ckpt.clear();
  return teacher;
}

PresetReport run_distill(const ExperimentConfig& teacher, const ExperimentConfig& student,
                         const std::vector<std::uint64_t>& seeds, const fs::path& out,
                         unsigned threads) {
  if (teacher.env != student.env || teacher.m != student.m || teacher.n_or_v != student.n_or_v ||
      teacher.length != student.length) {
    throw ConfigError("teacher and student spaces differ");
  }
  ExperimentPreset check{"distill", student, {{"teacher", {}}}, seeds};
  check.validate();
  fs::create_directories(out);

  std::vector<Job> teachers;
  std::vector<Job> students;
  for (std::uint64_t seed : seeds) {
    ExperimentConfig t = teacher;
    t.raft.seed = seed;
    teachers.push_back({"teacher/" + seed_dir(seed), "teacher", t});
  }
  for (std::uint64_t seed : seeds) {
    ExperimentConfig fed = student;
    fed.raft.seed = seed;
    fed.teacher_ckpt = "../../teacher/" + seed_dir(seed) + "/policy.ckpt";
    students.push_back({"teacher-fed/" + seed_dir(seed), "teacher-fed", fed});
  }
  for (std::uint64_t seed : seeds) {
    ExperimentConfig own = student;
    own.raft.seed = seed;
    own.teacher_ckpt.clear();
    students.push_back({"self-fed/" + seed_dir(seed), "self-fed", own});
  }
  PresetReport report{run_jobs(teachers, out, threads)};
  const auto rest = run_jobs(students, out, threads);
  report.runs.insert(report.runs.end(), rest.begin(), rest.end());
  write_manifest("distill", report.runs, out);
  write_aggregate("distill", report.runs, out);
  return report;
}

// ---------------------------------------------------------------------------
// Export

std::vector<std::string> plot_metrics() {
  std::vector<std::string> cols;
  for (const auto& c : stage_columns()) {
    if (c != "stage" && c != "provenance") cols.push_back(c);
  }
  return cols;
}

void export_plotdata(const fs::path& dir, std::ostream& out) {
  const auto manifest = Json::parse(read_text(dir / "manifest.json"));
  std::vector<std::string> missing;
  for (const auto& run : manifest["runs"]) {
    if (run["status"] != "ok" || !fs::exists(dir / run["run_id"].get<std::string>() / "stages.csv")) {
      missing.push_back(run["run_id"].get<std::string>());
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw FormatError("missing stage logs for runs: " + list);
  }
  const auto metrics = plot_metrics();
  out << "run_id,grid_point,seed,stage,metric,value\n";
  for (const auto& run : manifest["runs"]) {
    const auto id = run["run_id"].get<std::string>();
    const auto grid = run["grid_point"].get<std::string>();
    const auto seed = run["seed"].get<std::uint64_t>();
    for (const auto& rec : load_stages(dir / id)) {
      for (const auto& metric : metrics) {
        out << id << ',' << grid << ',' << seed << ',' << rec.stage << ',' << metric << ','
            << format_double(stage_metric(rec, metric)) << '\n';
      }
    }
  }
}

fs::path export_plotdata(const fs::path& dir) {
  std::ostringstream csv;
  export_plotdata(dir, csv);
  const fs::path path = dir / "plotdata.csv";
  write_text(path, csv.str());
  return path;
}

}  // namespace raftlab
