#include "raftlab/preference.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "raftlab/error.hpp"
#include "raftlab/numeric.hpp"
#include "raftlab/random.hpp"

namespace raftlab {

// ---------------------------------------------------------------------------
// Comparison data

ComparisonDataset generate_comparisons(const RewardFn& gold, std::size_t pairs,
                                       std::uint64_t seed, ComparisonOptions options) {
  if (pairs == 0) throw ConfigError("need at least one comparison pair");
  const std::uint64_t n = gold.num_responses();
  if (n < 2) throw DomainError("comparisons need a response space of size >= 2");
  const std::size_t m = gold.num_prompts();
  std::optional<ResponseSampler> sampler;
  if (options.sampler) {
    if (num_prompts(*options.sampler) != m || num_responses(*options.sampler) != n) {
      throw ConfigError("comparison sampler does not match the reward's spaces");
    }
    sampler.emplace(*options.sampler, 1.0);
  }

  Rng rng(derive_seed({seed, stream::kComparisons}));
  ComparisonDataset data;
  data.reserve(pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    const auto x = static_cast<PromptId>(uniform_index(rng, m));
    ResponseId ya = 0;
    ResponseId yb = 0;
    if (sampler) {
      ya = sampler->draw(x, 1, rng())[0];
      yb = ya;
      for (int attempt = 0; attempt < 64 && yb == ya; ++attempt) yb = sampler->draw(x, 1, rng())[0];
      if (yb == ya) yb = (ya + 1 + uniform_index(rng, n - 1)) % n;
    } else {
      ya = uniform_index(rng, n);
      yb = (ya + 1 + uniform_index(rng, n - 1)) % n;
    }
    const double ra = gold.score(x, ya);
    const double rb = gold.score(x, yb);
    bool a_wins = false;
    if (options.labels == LabelMode::BradleyTerry) {
      a_wins = uniform01(rng) < sigmoid(ra - rb);
    } else if (ra != rb) {
      a_wins = ra > rb;
    } else {
      a_wins = uniform01(rng) < 0.5;
    }
    data.push_back(a_wins ? Comparison{x, ya, yb} : Comparison{x, yb, ya});
  }
  return data;
}

void validate_dataset(const ComparisonDataset& data, std::size_t prompts,
                      std::uint64_t responses) {
  for (const auto& c : data) {
    if (c.prompt >= prompts) throw DomainError("comparison references unknown prompt");
    if (c.winner >= responses || c.loser >= responses) {
      throw DomainError("comparison references unknown response");
    }
    if (c.winner == c.loser) throw DomainError("comparison of a response with itself");
  }
}

std::pair<ComparisonDataset, ComparisonDataset> split_holdout(const ComparisonDataset& data,
                                                              double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must lie in [0, 1)");
  const auto held = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(data.size())));
  const auto cut = data.begin() + static_cast<std::ptrdiff_t>(data.size() - held);
  return {ComparisonDataset(data.begin(), cut), ComparisonDataset(cut, data.end())};
}

void write_comparisons_csv(std::ostream& out, const ComparisonDataset& data) {
  out << "x,y_w,y_l\n";
  for (const auto& c : data) out << c.prompt << ',' << c.winner << ',' << c.loser << '\n';
}

ComparisonDataset read_comparisons_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "x,y_w,y_l") {
    throw FormatError("comparison CSV must start with header x,y_w,y_l");
  }
  ComparisonDataset data;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::uint64_t x = 0, w = 0, l = 0;
    char c1 = 0, c2 = 0;
    if (!(row >> x >> c1 >> w >> c2 >> l) || c1 != ',' || c2 != ',' || !(row >> std::ws).eof()) {
      throw FormatError("malformed comparison CSV line " + std::to_string(lineno));
    }
    data.push_back({static_cast<PromptId>(x), w, l});
  }
  return data;
}

// ---------------------------------------------------------------------------
// BtRewardModel

namespace {

std::size_t parameter_count(Capacity capacity, std::size_t m, std::size_t n) {
  return capacity == Capacity::Full ? m * n : m + n;
}

const char* capacity_name(Capacity capacity) {
  return capacity == Capacity::Full ? "bt-full" : "bt-factorized";
}

}  // namespace

BtRewardModel::BtRewardModel(Capacity capacity, std::size_t prompts, std::size_t responses)
    : BtRewardModel(capacity, prompts, responses,
                    std::vector<double>(parameter_count(capacity, prompts, responses), 0.0)) {}

BtRewardModel::BtRewardModel(Capacity capacity, std::size_t prompts, std::size_t responses,
                             std::vector<double> params)
    : capacity_(capacity), prompts_(prompts), responses_(responses), params_(std::move(params)) {
  if (prompts == 0 || responses == 0) throw ConfigError("reward model needs m, n >= 1");
  if (params_.size() != parameter_count(capacity, prompts, responses)) {
    throw DomainError("reward model parameter vector has wrong size");
  }
  for (double v : params_) {
    if (!std::isfinite(v)) throw DomainError("reward model parameters must be finite");
  }
}

BtRewardModel BtRewardModel::with_params(std::vector<double> params) const {
  return BtRewardModel(capacity_, prompts_, responses_, std::move(params));
}

double BtRewardModel::score(PromptId x, ResponseId y) const {
  check(x, y);
  if (capacity_ == Capacity::Full) return params_[static_cast<std::size_t>(x) * responses_ + y];
  return params_[x] + params_[prompts_ + y];
}

double BtRewardModel::bound() const {
  double b = 0.0;
  for (std::size_t x = 0; x < prompts_; ++x) {
    for (std::size_t y = 0; y < responses_; ++y) {
      b = std::max(b, std::abs(score(static_cast<PromptId>(x), y)));
    }
  }
  return b;
}

TableDump BtRewardModel::dump() const {
  return TableDump{capacity_name(capacity_),
                   {{"prompts", std::to_string(prompts_)}, {"responses", std::to_string(responses_)}},
                   params_};
}

BtRewardModel BtRewardModel::from_dump(const TableDump& dump) {
  Capacity capacity;
  if (dump.kind == "bt-full") {
    capacity = Capacity::Full;
  } else if (dump.kind == "bt-factorized") {
    capacity = Capacity::Factorized;
  } else {
    throw FormatError("table dump of kind '" + dump.kind + "' is not a reward model");
  }
  return BtRewardModel(capacity, dump.attribute_u64("prompts"), dump.attribute_u64("responses"),
                       dump.values);
}

// ---------------------------------------------------------------------------
// Loss and training

namespace {

// Parameter indices of r(x, y_w) and r(x, y_l). The factorized prompt term
// cancels in the margin, so only the response terms appear.
std::pair<std::size_t, std::size_t> margin_indices(const BtRewardModel& model,
                                                   const Comparison& c) {
  if (model.capacity() == Capacity::Full) {
    const std::size_t base = static_cast<std::size_t>(c.prompt) * model.num_responses();
    return {base + c.winner, base + c.loser};
  }
  return {model.num_prompts() + c.winner, model.num_prompts() + c.loser};
}

void require_data(const BtRewardModel& model, const ComparisonDataset& data) {
  if (data.empty()) throw DomainError("comparison dataset is empty");
  validate_dataset(data, model.num_prompts(), model.num_responses());
}

double loss_unchecked(const BtRewardModel& model, const ComparisonDataset& data) {
  const auto p = model.params();
  double total = 0.0;
  for (const auto& c : data) {
    const auto [w, l] = margin_indices(model, c);
    total -= log_sigmoid(p[w] - p[l]);
  }
  return total / static_cast<double>(data.size());
}

std::vector<double> gradient_unchecked(const BtRewardModel& model, const ComparisonDataset& data) {
  const auto p = model.params();
  std::vector<double> grad(p.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(data.size());
  for (const auto& c : data) {
    const auto [w, l] = margin_indices(model, c);
    const double g = scale * sigmoid(p[l] - p[w]);
    grad[w] -= g;
    grad[l] += g;
  }
  return grad;
}

}  // namespace

double bt_loss(const BtRewardModel& model, const ComparisonDataset& data) {
  require_data(model, data);
  return loss_unchecked(model, data);
}

std::vector<double> bt_gradient(const BtRewardModel& model, const ComparisonDataset& data) {
  require_data(model, data);
  return gradient_unchecked(model, data);
}

double bt_accuracy(const RewardFn& model, const ComparisonDataset& data) {
  if (data.empty()) return std::numeric_limits<double>::quiet_NaN();
  double correct = 0.0;
  for (const auto& c : data) {
    const double margin = model.score(c.prompt, c.winner) - model.score(c.prompt, c.loser);
    if (margin > 0.0) {
      correct += 1.0;
    } else if (margin == 0.0) {
      correct += 0.5;
    }
  }
  return correct / static_cast<double>(data.size());
}

BtTrainReport train_bt(const BtRewardModel& model, const ComparisonDataset& train,
                       const ComparisonDataset& holdout, double lr, int epochs) {
  require_data(model, train);
  validate_dataset(holdout, model.num_prompts(), model.num_responses());
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be >= 0");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");

  BtTrainReport report{model, 0.0, 0.0, {}, false};
  report.degenerate = std::all_of(train.begin(), train.end(),
                                  [&](const Comparison& c) { return c == train.front(); });
  report.losses.push_back(loss_unchecked(report.model, train));
  for (int e = 0; e < epochs; ++e) {
    const auto grad = gradient_unchecked(report.model, train);
    std::vector<double> next(report.model.params().begin(), report.model.params().end());
    for (std::size_t i = 0; i < next.size(); ++i) next[i] -= lr * grad[i];
    report.model = report.model.with_params(std::move(next));
    report.losses.push_back(loss_unchecked(report.model, train));
  }
  report.train_accuracy = bt_accuracy(report.model, train);
  report.holdout_accuracy = bt_accuracy(report.model, holdout);
  return report;
}

// ---------------------------------------------------------------------------
// Calibration

std::vector<CalibrationBin> calibration_curve(const RewardFn& model, const ComparisonDataset& data,
                                              std::size_t bins) {
  if (bins < 2) throw ConfigError("calibration needs at least two bins");
  const double width = 0.5 / static_cast<double>(bins);
  std::vector<CalibrationBin> out(bins);
  std::vector<double> predicted(bins, 0.0);
  std::vector<double> correct(bins, 0.0);
  for (std::size_t b = 0; b < bins; ++b) {
    out[b].lower = 0.5 + width * static_cast<double>(b);
    out[b].upper = b + 1 == bins ? 1.0 : 0.5 + width * static_cast<double>(b + 1);
  }
  for (const auto& c : data) {
    const double margin = model.score(c.prompt, c.winner) - model.score(c.prompt, c.loser);
    const double p = sigmoid(std::abs(margin));
    const double hit = margin > 0.0 ? 1.0 : (margin < 0.0 ? 0.0 : 0.5);
    const auto b = std::min(static_cast<std::size_t>((p - 0.5) / width), bins - 1);
    predicted[b] += p;
    correct[b] += hit;
    ++out[b].count;
  }
  for (std::size_t b = 0; b < bins; ++b) {
    if (out[b].count == 0) continue;
    const auto n = static_cast<double>(out[b].count);
    out[b].mean_predicted = predicted[b] / n;
    out[b].accuracy = correct[b] / n;
  }
  return out;
}

}  // namespace raftlab
