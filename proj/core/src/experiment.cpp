#include "raftlab/experiment.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

#include "raftlab/checkpoint.hpp"
#include "raftlab/error.hpp"
#include "raftlab/numeric.hpp"

namespace raftlab {

namespace {

constexpr std::array<const char*, 18> kKeys = {
    "env", "m",  "n_or_V", "L",   "b",    "K",      "lambda",     "beta",    "mode",
    "T",   "lr", "epochs", "eps", "seed", "reward", "noise_mode", "noise_p", "teacher_ckpt"};

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::uint64_t parse_count(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    if (!text.empty() && text[0] != '-') v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) {
    throw ConfigError(key + " must be a nonnegative integer, got '" + text + "'");
  }
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  try {
    return parse_double(text);
  } catch (const FormatError&) {
    throw ConfigError(key + " must be a number, got '" + text + "'");
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// RewardSpec

RewardSpec RewardSpec::parse(const std::string& text) {
  RewardSpec spec;
  std::istringstream in(text);
  std::string part;
  bool first = true;
  while (std::getline(in, part, ':')) {
    part = trim(part);
    if (first) {
      if (part != "uniform" && part != "interaction" && part != "hamming" && part != "proxy") {
        throw ConfigError("unknown reward kind '" + part + "'");
      }
      spec.kind = part;
      first = false;
      continue;
    }
    const auto eq = part.find('=');
    if (eq == std::string::npos) throw ConfigError("reward option '" + part + "' is not key=value");
    const std::string key = part.substr(0, eq);
    const std::string value = part.substr(eq + 1);
    if (key == "B") {
      spec.bound = parse_real(key, value);
    } else if (key == "init") {
      spec.init = parse_real(key, value);
    } else if (key == "gold") {
      if (value != "uniform" && value != "interaction") throw ConfigError("gold must be a table kind");
      spec.gold = value;
    } else if (key == "capacity") {
      if (value == "factorized") {
        spec.capacity = Capacity::Factorized;
      } else if (value == "full") {
        spec.capacity = Capacity::Full;
      } else {
        throw ConfigError("capacity must be factorized or full");
      }
    } else if (key == "pairs") {
      spec.pairs = parse_count(key, value);
    } else if (key == "bt_lr") {
      spec.bt_lr = parse_real(key, value);
    } else if (key == "bt_epochs") {
      spec.bt_epochs = static_cast<int>(parse_count(key, value));
    } else {
      throw ConfigError("unknown reward option '" + key + "'");
    }
  }
  if (first) throw ConfigError("empty reward specification");
  return spec;
}

std::string RewardSpec::text() const {
  const RewardSpec base;
  std::string out = kind;
  if (bound != base.bound) out += ":B=" + format_double(bound);
  if (init != base.init) out += ":init=" + format_double(init);
  if (kind == "proxy") {
    if (gold != base.gold) out += ":gold=" + gold;
    if (capacity != base.capacity) out += ":capacity=full";
    if (pairs != base.pairs) out += ":pairs=" + std::to_string(pairs);
    if (bt_lr != base.bt_lr) out += ":bt_lr=" + format_double(bt_lr);
    if (bt_epochs != base.bt_epochs) out += ":bt_epochs=" + std::to_string(bt_epochs);
  }
  return out;
}

// ---------------------------------------------------------------------------
// ExperimentConfig

ExperimentConfig ExperimentConfig::defaults(const std::string& env) {
  ExperimentConfig cfg;
  if (env == "bandit") {
    return cfg;
  }
  if (env == "seq") {
    cfg.env = "seq";
    cfg.n_or_v = 8;
    cfg.length = 6;
    cfg.raft.lr = 8.0;
    cfg.reward.kind = "hamming";
    return cfg;
  }
  throw ConfigError("env must be bandit or seq, got '" + env + "'");
}

RaftConfig ExperimentConfig::raft_config() const {
  RaftConfig out = raft;
  out.eps = eps.value_or(0.01 * reward.bound);
  return out;
}

void ExperimentConfig::validate() const {
  if (env != "bandit" && env != "seq") throw ConfigError("env must be bandit or seq");
  if (m < 1) throw ConfigError("m must be >= 1");
  if (n_or_v < 2) throw ConfigError("n_or_V must be >= 2");
  if (env == "bandit" && length != 1) throw ConfigError("bandit env needs L = 1");
  if (env == "seq" && length < 1) throw ConfigError("L must be >= 1");
  raft_config().validate();
  if (!(reward.bound > 0.0) || !std::isfinite(reward.bound)) throw ConfigError("B must be > 0");
  if (env == "seq" && reward.kind != "hamming") throw ConfigError("seq env supports the hamming reward only");
  if (env == "bandit" && reward.kind == "hamming") throw ConfigError("hamming reward needs the seq env");
  if (reward.kind == "hamming" && reward.bound != 1.0) throw ConfigError("hamming reward has B = 1");
  if (reward.init != 0.0 && env != "bandit") throw ConfigError("init is supported for the bandit env only");
  if (reward.kind == "proxy" && (reward.pairs < 2 || reward.bt_epochs < 0 || !(reward.bt_lr >= 0.0))) {
    throw ConfigError("invalid proxy training settings");
  }
  if (noise_mode < 0 || noise_mode > 3) throw ConfigError("noise_mode must be 0 (off), 1, 2 or 3");
  if (!(noise_p >= 0.0 && noise_p <= 1.0)) throw ConfigError("noise_p must lie in [0, 1]");
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "env") {
    if (value != cfg.env) throw ConfigError("env must be set before other keys");
  } else if (key == "m") {
    cfg.m = parse_count(key, value);
  } else if (key == "n_or_V") {
    cfg.n_or_v = parse_count(key, value);
  } else if (key == "L") {
    cfg.length = parse_count(key, value);
  } else if (key == "b") {
    cfg.raft.b = parse_count(key, value);
  } else if (key == "K") {
    cfg.raft.k = parse_count(key, value);
  } else if (key == "lambda") {
    cfg.raft.temperature = parse_real(key, value);
  } else if (key == "beta") {
    cfg.raft.beta = parse_real(key, value);
  } else if (key == "mode") {
    cfg.raft.mode = parse_ranking_mode(value);
  } else if (key == "T") {
    cfg.raft.max_stages = parse_count(key, value);
  } else if (key == "lr") {
    cfg.raft.lr = parse_real(key, value);
  } else if (key == "epochs") {
    cfg.raft.epochs = static_cast<int>(parse_count(key, value));
  } else if (key == "eps") {
    cfg.eps = parse_real(key, value);
  } else if (key == "seed") {
    cfg.raft.seed = parse_count(key, value);
  } else if (key == "reward") {
    cfg.reward = RewardSpec::parse(value);
  } else if (key == "noise_mode") {
    cfg.noise_mode = static_cast<int>(parse_count(key, value));
  } else if (key == "noise_p") {
    cfg.noise_p = parse_real(key, value);
  } else if (key == "teacher_ckpt") {
    cfg.teacher_ckpt = value == "none" ? std::string() : value;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

ExperimentConfig parse_config(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> entries;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (seen.count(key)) throw ConfigError("key '" + key + "' given twice");
    seen[key] = lineno;
    entries.emplace_back(std::move(key), std::move(value));
  }
  ExperimentConfig cfg = ExperimentConfig::defaults("bandit");
  for (const auto& [key, value] : entries) {
    if (key == "env") cfg = ExperimentConfig::defaults(value);
  }
  for (const auto& [key, value] : entries) set_config_value(cfg, key, value);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in);
}

void write_config(std::ostream& out, const ExperimentConfig& cfg) {
  const RaftConfig r = cfg.raft_config();
  const std::map<std::string, std::string> values = {
      {"env", cfg.env},
      {"m", std::to_string(cfg.m)},
      {"n_or_V", std::to_string(cfg.n_or_v)},
      {"L", std::to_string(cfg.length)},
      {"b", std::to_string(r.b)},
      {"K", std::to_string(r.k)},
      {"lambda", format_double(r.temperature)},
      {"beta", format_double(r.beta)},
      {"mode", to_string(r.mode)},
      {"T", std::to_string(r.max_stages)},
      {"lr", format_double(r.lr)},
      {"epochs", std::to_string(r.epochs)},
      {"eps", format_double(r.eps)},
      {"seed", std::to_string(r.seed)},
      {"reward", cfg.reward.text()},
      {"noise_mode", std::to_string(cfg.noise_mode)},
      {"noise_p", format_double(cfg.noise_p)},
      {"teacher_ckpt", cfg.teacher_ckpt.empty() ? "none" : cfg.teacher_ckpt},
  };
  for (const char* key : kKeys) out << key << '=' << values.at(key) << '\n';
}

std::string config_text(const ExperimentConfig& cfg) {
  std::ostringstream out;
  write_config(out, cfg);
  return out.str();
}

// ---------------------------------------------------------------------------
// Environment construction

namespace {

std::shared_ptr<const RewardTable> make_table(const std::string& kind, const ExperimentConfig& cfg) {
  const std::uint64_t seed = cfg.raft.seed;
  if (kind == "uniform") {
    return std::make_shared<RewardTable>(RewardTable::uniform(cfg.m, cfg.n_or_v, cfg.reward.bound, seed));
  }
  return std::make_shared<RewardTable>(RewardTable::interaction(cfg.m, cfg.n_or_v, cfg.reward.bound, seed));
}

}  // namespace

Experiment make_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const RaftConfig raft = cfg.raft_config();
  const RewardSpec& spec = cfg.reward;

  std::optional<Policy> initial;
  RewardPtr clean;
  RewardPtr optimized;
  RewardPtr gold;
  std::optional<ProxyReport> proxy;
  PromptSpace prompts(cfg.m);

  if (cfg.env == "seq") {
    prompts = PromptSpace::random_targets(cfg.m, cfg.n_or_v, cfg.length, cfg.raft.seed);
    initial = SeqPolicy(cfg.m, cfg.n_or_v, cfg.length);
    clean = std::make_shared<HammingReward>(prompts);
    optimized = clean;
  } else {
    const auto table = make_table(spec.kind == "proxy" ? spec.gold : spec.kind, cfg);
    clean = table;
    optimized = table;
    if (spec.kind == "proxy") {
      const auto data = generate_comparisons(*table, spec.pairs, cfg.raft.seed);
      const auto [train, holdout] = split_holdout(data, 0.1);
      const auto report = train_bt(BtRewardModel(spec.capacity, cfg.m, cfg.n_or_v), train, holdout,
                                   spec.bt_lr, spec.bt_epochs);
      proxy = ProxyReport{report.train_accuracy, report.holdout_accuracy, report.losses.back()};
      optimized = std::make_shared<BtRewardModel>(report.model);
      gold = table;
    }
    if (spec.init != 0.0) {
      std::vector<double> logits(table->values().begin(), table->values().end());
      for (double& v : logits) v *= spec.init / spec.bound;
      initial = BanditPolicy(cfg.m, cfg.n_or_v, std::move(logits));
    } else {
      initial = BanditPolicy(cfg.m, cfg.n_or_v);
    }
  }

  if (cfg.noise_mode != 0) {
    NoiseConfig noise;
    noise.mode = cfg.noise_mode;
    noise.probability = cfg.noise_p;
    noise.seed = cfg.raft.seed;
    optimized = apply_noise(optimized, noise);
    if (!gold) gold = clean;
  }

  Experiment ex{*initial, {}, raft, {}, proxy};
  ex.env.reward = optimized;
  ex.env.gold = gold;
  ex.env.train_prompts = prompts.all();
  ex.env.test_prompts = prompts.all();
  const RewardFn& reference_reward = gold ? *gold : *clean;
  for (PromptId x : ex.env.test_prompts) {
    ex.env.reference_set.push_back({x, greedy_optimal(reference_reward, x).response});
  }
  ex.env.validate(ex.initial);

  if (cfg.teacher_ckpt == "lockstep") {
    ex.source = lockstep_teacher(ex.initial, ex.env, raft);
  } else if (!cfg.teacher_ckpt.empty()) {
    Policy teacher = load_policy(cfg.teacher_ckpt);
    if (!same_shape(teacher, ex.initial)) {
      throw ConfigError("teacher checkpoint does not match the student's spaces");
    }
    ex.source = fixed_teacher(std::move(teacher), ex.env.reward, raft);
  }
  return ex;
}

}  // namespace raftlab
