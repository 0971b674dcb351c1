#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "raftlab/raft.hpp"

namespace raftlab {

/// Column names of the stage CSV, in order. wall_time is appended only when
/// requested so that default logs are reproducible byte for byte.
std::vector<std::string> stage_columns(bool with_wall_time = false);

void write_stage_csv(std::ostream& out, std::span<const StageRecord> records,
                     bool with_wall_time = false);
std::vector<StageRecord> read_stage_csv(std::istream& in);

/// Numeric value of a named column for one record (booleans as 0/1,
/// provenance as 0 own / 1 teacher).
double stage_metric(const StageRecord& record, const std::string& column);

}  // namespace raftlab
