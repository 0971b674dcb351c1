#pragma once
/*
 * Flat key=value run configuration and environment construction.
 *
 * Keys: env, m, n_or_V, L, b, K, lambda, beta, mode, T, lr, epochs, eps, seed,
 * reward, noise_mode, noise_p, teacher_ckpt. Blank lines and '#' comments are
 * ignored; unknown or repeated keys are errors.
 *
 * The reward value is a kind optionally followed by ':'-separated options:
 *
 *   uniform | interaction        bandit table in [0, B]
 *   hamming                      sequence Hamming reward (B = 1)
 *   proxy                        Bradley-Terry model fit to a gold table;
 *                                the loop optimizes the model and logs gold
 *
 *   options: B=<bound> init=<kappa> gold=<uniform|interaction>
 *            capacity=<factorized|full> pairs=<n> bt_lr=<x> bt_epochs=<n>
 *
 * init=kappa starts the bandit policy at logits kappa * gold / B instead of
 * the uniform policy. teacher_ckpt is empty, "lockstep" (a teacher running the
 * same configuration alongside the student) or a policy checkpoint path.
 */

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "raftlab/preference.hpp"
#include "raftlab/raft.hpp"

namespace raftlab {

struct RewardSpec {
  std::string kind = "uniform";
  double bound = 1.0;
  double init = 0.0;
  std::string gold = "interaction";
  Capacity capacity = Capacity::Factorized;
  std::size_t pairs = 20000;
  double bt_lr = 50.0;
  int bt_epochs = 300;

  static RewardSpec parse(const std::string& text);
  /// Canonical text; parse(text()) == *this.
  std::string text() const;
  friend bool operator==(const RewardSpec&, const RewardSpec&) = default;
};

struct ExperimentConfig {
  std::string env = "bandit";
  std::size_t m = 8;
  std::size_t n_or_v = 32;
  std::size_t length = 1;
  /// raft.eps is ignored; see eps below.
  RaftConfig raft;
  /// Convergence band; 0.01 * B when unset.
  std::optional<double> eps;
  RewardSpec reward;
  int noise_mode = 0;
  double noise_p = 0.2;
  std::string teacher_ckpt;

  /// Desk defaults: bandit m=8, n=32, lr=4; seq m=8, V=8, L=6, lr=8, hamming.
  static ExperimentConfig defaults(const std::string& env);
  /// raft with eps resolved.
  RaftConfig raft_config() const;
  void validate() const;
};

/// Parses key=value text on top of the defaults of its env (bandit when the
/// key is absent).
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Applies one key=value override.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
/// Writes every key in canonical order.
void write_config(std::ostream& out, const ExperimentConfig& cfg);
std::string config_text(const ExperimentConfig& cfg);

struct ProxyReport {
  double train_accuracy = 0.0;
  double holdout_accuracy = 0.0;
  double final_loss = 0.0;
};

struct Experiment {
  Policy initial;
  RaftEnvironment env;
  RaftConfig raft;
  BatchSource source;
  std::optional<ProxyReport> proxy;
};

Experiment make_experiment(const ExperimentConfig& cfg);

}  // namespace raftlab
