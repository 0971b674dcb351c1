#pragma once

// Versioned table dump shared by policies, reward tables and reward models.
//
//   raftlab-table 1 <text|binary>
//   kind <bandit|seq|reward-table|bt-full|bt-factorized>
//   <key> <value>            (one line per shape attribute)
//   values <count>
//   <body>
//
// The text body holds one shortest-round-trip decimal per line; the binary
// body holds <count> little-endian IEEE-754 doubles. Both round-trip
// bit-exactly.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "raftlab/policy.hpp"

namespace raftlab {

enum class Encoding { Text, Binary };

struct TableDump {
  std::string kind;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<double> values;

  const std::string& attribute(const std::string& key) const;
  std::uint64_t attribute_u64(const std::string& key) const;
  double attribute_double(const std::string& key) const;

  friend bool operator==(const TableDump&, const TableDump&) = default;
};

void write_table(std::ostream& out, const TableDump& dump, Encoding encoding);
TableDump read_table(std::istream& in);

void save_table(const std::filesystem::path& path, const TableDump& dump, Encoding encoding);
TableDump load_table(const std::filesystem::path& path);

TableDump to_dump(const Policy& policy);
Policy policy_from_dump(const TableDump& dump);

void save_policy(const std::filesystem::path& path, const Policy& policy,
                 Encoding encoding = Encoding::Binary);
Policy load_policy(const std::filesystem::path& path);

}  // namespace raftlab
