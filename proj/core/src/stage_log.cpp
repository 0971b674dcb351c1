#include "raftlab/stage_log.hpp"

#include <istream>
#include <ostream>
#include <sstream>

#include "raftlab/error.hpp"
#include "raftlab/numeric.hpp"

namespace raftlab {

namespace {

const std::vector<std::string> kColumns = {
    "stage",          "selection_reward", "train_reward", "test_reward", "gold_reward",
    "kl_to_initial",  "perplexity",       "msttr_100",    "distinct_1",  "distinct_2",
    "unique_1",       "unique_2",         "mean_length",  "batch_size",  "sft_loss_start",
    "sft_loss_end",   "sft_monotone",     "provenance"};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::uint64_t parse_u64(const std::string& text) {
  std::size_t used = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw FormatError("not an integer: '" + text + "'");
  return v;
}

}  // namespace

std::vector<std::string> stage_columns(bool with_wall_time) {
  auto cols = kColumns;
  if (with_wall_time) cols.push_back("wall_time");
  return cols;
}

void write_stage_csv(std::ostream& out, std::span<const StageRecord> records,
                     bool with_wall_time) {
  const auto cols = stage_columns(with_wall_time);
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : records) {
    out << r.stage << ',' << format_double(r.selection_reward) << ','
        << format_double(r.train_reward) << ',' << format_double(r.test_reward) << ','
        << format_double(r.gold_reward) << ',' << format_double(r.kl_to_initial) << ','
        << format_double(r.perplexity) << ',' << format_double(r.msttr_100) << ','
        << format_double(r.distinct_1) << ',' << format_double(r.distinct_2) << ','
        << r.unique_1 << ',' << r.unique_2 << ',' << format_double(r.mean_length) << ','
        << r.batch_size << ',' << format_double(r.sft_loss_start) << ','
        << format_double(r.sft_loss_end) << ',' << (r.sft_monotone ? 1 : 0) << ','
        << to_string(r.provenance);
    if (with_wall_time) out << ',' << format_double(r.wall_time);
    out << '\n';
  }
}

std::vector<StageRecord> read_stage_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("stage log is empty");
  const auto header = split(line);
  const bool timed = header == stage_columns(true);
  if (!timed && header != stage_columns(false)) throw FormatError("unexpected stage log header");

  std::vector<StageRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line);
    if (f.size() != header.size()) throw FormatError("stage log row has wrong field count");
    StageRecord r;
    r.stage = parse_u64(f[0]);
    r.selection_reward = parse_double(f[1]);
    r.train_reward = parse_double(f[2]);
    r.test_reward = parse_double(f[3]);
    r.gold_reward = parse_double(f[4]);
    r.kl_to_initial = parse_double(f[5]);
    r.perplexity = parse_double(f[6]);
    r.msttr_100 = parse_double(f[7]);
    r.distinct_1 = parse_double(f[8]);
    r.distinct_2 = parse_double(f[9]);
    r.unique_1 = parse_u64(f[10]);
    r.unique_2 = parse_u64(f[11]);
    r.mean_length = parse_double(f[12]);
    r.batch_size = parse_u64(f[13]);
    r.sft_loss_start = parse_double(f[14]);
    r.sft_loss_end = parse_double(f[15]);
    r.sft_monotone = parse_u64(f[16]) != 0;
    if (f[17] == "own") {
      r.provenance = Provenance::Own;
    } else if (f[17] == "teacher") {
      r.provenance = Provenance::Teacher;
    } else {
      throw FormatError("unknown provenance '" + f[17] + "'");
    }
    if (timed) r.wall_time = parse_double(f[18]);
    if (!records.empty() && r.stage <= records.back().stage) {
      throw FormatError("stage indices must increase");
    }
    records.push_back(r);
  }
  return records;
}

double stage_metric(const StageRecord& r, const std::string& column) {
  if (column == "stage") return static_cast<double>(r.stage);
  if (column == "selection_reward") return r.selection_reward;
  if (column == "train_reward") return r.train_reward;
  if (column == "test_reward") return r.test_reward;
  if (column == "gold_reward") return r.gold_reward;
  if (column == "kl_to_initial") return r.kl_to_initial;
  if (column == "perplexity") return r.perplexity;
  if (column == "msttr_100") return r.msttr_100;
  if (column == "distinct_1") return r.distinct_1;
  if (column == "distinct_2") return r.distinct_2;
  if (column == "unique_1") return static_cast<double>(r.unique_1);
  if (column == "unique_2") return static_cast<double>(r.unique_2);
  if (column == "mean_length") return r.mean_length;
  if (column == "batch_size") return static_cast<double>(r.batch_size);
  if (column == "sft_loss_start") return r.sft_loss_start;
  if (column == "sft_loss_end") return r.sft_loss_end;
  if (column == "sft_monotone") return r.sft_monotone ? 1.0 : 0.0;
  if (column == "provenance") return r.provenance == Provenance::Own ? 0.0 : 1.0;
  if (column == "wall_time") return r.wall_time;
  throw DomainError("unknown stage column '" + column + "'");
}

}  // namespace raftlab
