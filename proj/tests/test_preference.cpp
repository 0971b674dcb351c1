#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracle.hpp"
#include "raftlab/error.hpp"
#include "raftlab/preference.hpp"

using namespace raftlab;

namespace {

double oracle_sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

BtRewardModel table_model(std::size_t m, std::size_t n, std::vector<double> values) {
  return BtRewardModel(Capacity::Full, m, n, std::move(values));
}

}  // namespace

TEST_CASE("equal gold rewards give fair labels") {
  const RewardTable flat(1, 2, {0.5, 0.5}, 1.0);
  const auto data = generate_comparisons(flat, 20000, 3);
  std::size_t zero_wins = 0;
  for (const auto& c : data) {
    CHECK(c.winner != c.loser);
    zero_wins += c.winner == 0;
  }
  CHECK(oracle::within_binomial(zero_wins, data.size(), 0.5));
}

TEST_CASE("a reward gap of 4 is preferred with probability sigmoid(4)") {
  const RewardTable gap(1, 2, {4.0, 0.0}, 4.0);
  const std::size_t n = 100000;
  const auto data = generate_comparisons(gap, n, 9);
  std::size_t hits = 0;
  for (const auto& c : data) hits += c.winner == 0;
  CHECK(oracle::within_binomial(hits, n, oracle_sigmoid(4.0)));
  CHECK(oracle_sigmoid(4.0) == doctest::Approx(0.9820).epsilon(1e-4));
}

TEST_CASE("comparison generation is deterministic and validated") {
  const auto gold = RewardTable::uniform(3, 5, 1.0, 1);
  CHECK(generate_comparisons(gold, 100, 4) == generate_comparisons(gold, 100, 4));
  CHECK(generate_comparisons(gold, 100, 4) != generate_comparisons(gold, 100, 5));
  const RewardTable single(2, 1, {0.1, 0.2}, 1.0);
  CHECK_THROWS(generate_comparisons(single, 10, 1));
  CHECK_THROWS_AS(generate_comparisons(gold, 0, 1), ConfigError);
}

TEST_CASE("policy-sampled comparisons stay within the spaces") {
  const auto gold = RewardTable::uniform(3, 5, 1.0, 1);
  const Policy p = BanditPolicy(3, 5, std::vector<double>(15, 0.0));
  ComparisonOptions opt;
  opt.sampler = &p;
  const auto data = generate_comparisons(gold, 500, 2, opt);
  CHECK_NOTHROW(validate_dataset(data, 3, 5));
}

TEST_CASE("bt_loss hand values") {
  const ComparisonDataset data{{0, 0, 1}, {1, 1, 0}};
  CHECK(bt_loss(BtRewardModel(Capacity::Full, 2, 2), data) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  const ComparisonDataset one{{0, 1, 0}};
  const auto model = table_model(1, 2, {0.0, 10.0});
  CHECK(bt_loss(model, one) == doctest::Approx(-std::log(oracle_sigmoid(10.0))).epsilon(1e-10));
  CHECK(bt_loss(model, one) == doctest::Approx(4.54e-5).epsilon(1e-3));
  CHECK_THROWS_AS(bt_loss(model, ComparisonDataset{}), DomainError);
}

TEST_CASE("bt gradient matches finite differences for both capacities") {
  const auto gold = RewardTable::interaction(3, 4, 1.0, 2);
  const auto data = generate_comparisons(gold, 300, 1);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (Capacity c : {Capacity::Full, Capacity::Factorized}) {
    const BtRewardModel blank(c, 3, 4);
    CHECK(blank.num_parameters() == (c == Capacity::Full ? 12u : 7u));
    std::vector<double> params(blank.num_parameters());
    for (double& v : params) v = u(rng);
    const auto model = blank.with_params(params);
    const auto grad = bt_gradient(model, data);
    const double h = 1e-5;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto up = params, down = params;
      up[i] += h;
      down[i] -= h;
      const double fd = (bt_loss(model.with_params(up), data) - bt_loss(model.with_params(down), data)) / (2 * h);
      CHECK(std::abs(fd - grad[i]) <= 1e-6 * std::max(std::abs(fd), 1e-3));
    }
  }
}

TEST_CASE("bt loss decreases monotonically on separable data") {
  const ComparisonDataset data{{0, 2, 0}, {0, 2, 1}, {0, 1, 0}, {1, 0, 2}};
  const auto report = train_bt(BtRewardModel(Capacity::Full, 2, 3), data, {}, 1.0, 200);
  for (std::size_t e = 1; e < report.losses.size(); ++e) CHECK(report.losses[e] < report.losses[e - 1]);
  CHECK(report.train_accuracy == 1.0);
  CHECK(std::isnan(report.holdout_accuracy));
}

TEST_CASE("train_bt with lr 0 leaves parameters unchanged and flags degenerate data") {
  const ComparisonDataset same{{0, 1, 0}, {0, 1, 0}};
  const BtRewardModel start(Capacity::Factorized, 1, 2, {0.25, -1.0, 2.0});
  const auto report = train_bt(start, same, {}, 0.0, 10);
  CHECK(std::equal(report.model.params().begin(), report.model.params().end(), start.params().begin()));
  CHECK(report.degenerate);
  CHECK_FALSE(train_bt(start, {{0, 1, 0}, {0, 0, 1}}, {}, 0.0, 1).degenerate);
}

TEST_CASE("factorized model cannot express interaction") {
  const auto gold = RewardTable::interaction(4, 8, 1.0, 6);
  ComparisonOptions opt;
  opt.labels = LabelMode::Deterministic;
  const auto data = generate_comparisons(gold, 20000, 6, opt);
  const auto [train, holdout] = split_holdout(data, 0.2);
  CHECK(holdout.size() == 4000);
  const auto full = train_bt(BtRewardModel(Capacity::Full, 4, 8), train, holdout, 200.0, 300);
  const auto fact = train_bt(BtRewardModel(Capacity::Factorized, 4, 8), train, holdout, 50.0, 300);
  CHECK(full.holdout_accuracy >= 0.95);
  CHECK(fact.holdout_accuracy < full.holdout_accuracy);
}

TEST_CASE("gold-capacity accuracy grows with data") {
  std::vector<double> acc;
  for (std::size_t pairs : {1000, 10000, 50000}) {
    std::vector<double> per_seed;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto gold = RewardTable::uniform(8, 32, 1.0, seed);
      const auto data = generate_comparisons(gold, pairs + 5000, seed);
      const ComparisonDataset train(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(pairs));
      const ComparisonDataset holdout(data.begin() + static_cast<std::ptrdiff_t>(pairs), data.end());
      per_seed.push_back(train_bt(BtRewardModel(Capacity::Full, 8, 32), train, holdout, 500.0, 200).holdout_accuracy);
    }
    acc.push_back(oracle::mean(per_seed));
  }
  CHECK(acc[0] <= acc[1]);
  CHECK(acc[1] <= acc[2]);
}

TEST_CASE("accuracy counts ties as one half") {
  const auto model = table_model(1, 3, {1.0, 1.0, 0.0});
  const ComparisonDataset data{{0, 0, 1}, {0, 0, 2}, {0, 2, 0}, {0, 1, 2}};
  CHECK(bt_accuracy(model, data) == 2.5 / 4.0);
}

TEST_CASE("calibration of the zero model puts everything in the first bin") {
  const auto gold = RewardTable::uniform(2, 4, 1.0, 3);
  const auto data = generate_comparisons(gold, 1000, 2);
  const auto bins = calibration_curve(BtRewardModel(Capacity::Full, 2, 4), data);
  REQUIRE(bins.size() == 10);
  CHECK(bins[0].count == 1000);
  CHECK(bins[0].mean_predicted == 0.5);
  CHECK(bins[0].accuracy == 0.5);
  for (std::size_t b = 1; b < bins.size(); ++b) CHECK(bins[b].count == 0);
  CHECK(bins[0].lower == 0.5);
  CHECK(bins[9].upper == 1.0);
}

TEST_CASE("calibration hand example") {
  // Margins 0.1, -1, 2, 5 give oriented probabilities 0.525, 0.731, 0.881, 0.9933.
  const auto model = table_model(1, 5, {0.0, 0.1, 1.0, 2.0, 5.0});
  const ComparisonDataset data{{0, 1, 0}, {0, 0, 2}, {0, 3, 0}, {0, 4, 0}};
  const auto bins = calibration_curve(model, data);
  std::size_t total = 0;
  for (const auto& b : bins) total += b.count;
  CHECK(total == 4);
  CHECK(bins[0].count == 1);
  CHECK(bins[0].accuracy == 1.0);
  CHECK(bins[4].count == 1);
  CHECK(bins[4].accuracy == 0.0);
  CHECK(bins[4].mean_predicted == doctest::Approx(oracle_sigmoid(1.0)));
  CHECK(bins[7].count == 1);
  CHECK(bins[9].count == 1);
  CHECK(bins[9].mean_predicted == doctest::Approx(oracle_sigmoid(5.0)));
  CHECK_THROWS_AS(calibration_curve(model, data, 1), ConfigError);
}

TEST_CASE("comparison CSV round-trips") {
  const ComparisonDataset data{{0, 3, 1}, {2, 0, 4}};
  std::stringstream buf;
  write_comparisons_csv(buf, data);
  CHECK(buf.str() == "x,y_w,y_l\n0,3,1\n2,0,4\n");
  CHECK(read_comparisons_csv(buf) == data);
  std::stringstream bad("x,y_w,y_l\n0,1\n");
  CHECK_THROWS_AS(read_comparisons_csv(bad), FormatError);
}
