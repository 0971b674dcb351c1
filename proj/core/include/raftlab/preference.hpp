#pragma once

// Pairwise preference data and Bradley-Terry reward models.
//
// Under the BT model P(y_w preferred over y_l | x) = sigmoid(r(x, y_w) - r(x, y_l)),
// and a reward model is fit by minimizing the mean negative log-likelihood
// -E[log sigmoid(r(x, y_w) - r(x, y_l))] over labeled comparisons.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "raftlab/checkpoint.hpp"
#include "raftlab/policy.hpp"
#include "raftlab/reward.hpp"

namespace raftlab {

struct Comparison {
  PromptId prompt = 0;
  ResponseId winner = 0;
  ResponseId loser = 0;

  friend bool operator==(const Comparison&, const Comparison&) = default;
};

using ComparisonDataset = std::vector<Comparison>;

enum class LabelMode {
  /// The first drawn response wins with probability sigmoid(r_a - r_b).
  BradleyTerry,
  /// The higher-reward response always wins; exact ties are a fair coin.
  Deterministic,
};

struct ComparisonOptions {
  LabelMode labels = LabelMode::BradleyTerry;
  /// When set, candidate pairs are drawn from this policy (temperature 1)
  /// instead of uniformly over the response space.
  const Policy* sampler = nullptr;
};

/// Draws x uniformly, y_a != y_b, and labels the pair from `gold`.
ComparisonDataset generate_comparisons(const RewardFn& gold, std::size_t pairs,
                                       std::uint64_t seed, ComparisonOptions options = {});

void validate_dataset(const ComparisonDataset& data, std::size_t prompts,
                      std::uint64_t responses);

/// Splits off the trailing `fraction` of records as a holdout set.
std::pair<ComparisonDataset, ComparisonDataset> split_holdout(const ComparisonDataset& data,
                                                              double fraction);

void write_comparisons_csv(std::ostream& out, const ComparisonDataset& data);
ComparisonDataset read_comparisons_csv(std::istream& in);

enum class Capacity {
  /// One free reward per (x, y) cell.
  Full,
  /// r(x, y) = u[x] + v[y]; cannot express prompt-response interaction.
  Factorized,
};

class BtRewardModel final : public RewardFn {
 public:
  BtRewardModel(Capacity capacity, std::size_t prompts, std::size_t responses);
  BtRewardModel(Capacity capacity, std::size_t prompts, std::size_t responses,
                std::vector<double> params);

  Capacity capacity() const { return capacity_; }
  std::span<const double> params() const { return params_; }
  std::size_t num_parameters() const { return params_.size(); }
  BtRewardModel with_params(std::vector<double> params) const;

  std::size_t num_prompts() const override { return prompts_; }
  std::uint64_t num_responses() const override { return responses_; }
  /// Largest |r(x, y)| over the table.
  double bound() const override;
  double score(PromptId x, ResponseId y) const override;

  TableDump dump() const;
  static BtRewardModel from_dump(const TableDump& dump);

 private:
  Capacity capacity_;
  std::size_t prompts_;
  std::size_t responses_;
  std::vector<double> params_;
};

double bt_loss(const BtRewardModel& model, const ComparisonDataset& data);
std::vector<double> bt_gradient(const BtRewardModel& model, const ComparisonDataset& data);

/// Fraction of records whose reward margin has the labeled sign; ties count 0.5.
double bt_accuracy(const RewardFn& model, const ComparisonDataset& data);

struct BtTrainReport {
  BtRewardModel model;
  double train_accuracy = 0.0;
  double holdout_accuracy = 0.0;
  /// losses[0] before training, losses[e] after epoch e.
  std::vector<double> losses;
  /// Every training record compares the same (x, y_w, y_l).
  bool degenerate = false;
};

/// Full-batch gradient descent on bt_loss, one step per epoch.
BtTrainReport train_bt(const BtRewardModel& model, const ComparisonDataset& train,
                       const ComparisonDataset& holdout, double lr, int epochs);

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  double mean_predicted = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

/// Buckets records by oriented predicted probability max(p, 1 - p) into
/// equal-width bins on [0.5, 1]. Accuracy is the fraction of records whose
/// label agrees with the predicted direction (zero margins count 0.5).
/// Empty bins are reported with count 0.
std::vector<CalibrationBin> calibration_curve(const RewardFn& model, const ComparisonDataset& data,
                                              std::size_t bins = 10);

}  // namespace raftlab
