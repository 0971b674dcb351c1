#include "raftlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "raftlab/error.hpp"
#include "raftlab/numeric.hpp"

namespace raftlab {

namespace {

constexpr const char* kMagic = "raftlab-table";
constexpr int kVersion = 1;

std::uint64_t to_u64(const std::string& text) {
  std::size_t pos = 0;
  std::uint64_t v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    throw FormatError("not an unsigned integer: '" + text + "'");
  }
  if (pos != text.size()) throw FormatError("not an unsigned integer: '" + text + "'");
  return v;
}

std::uint64_t byteswap64(std::uint64_t v) {
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) {
    out = (out << 8) | (v & 0xff);
    v >>= 8;
  }
  return out;
}

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return byteswap64(v);
}

}  // namespace

const std::string& TableDump::attribute(const std::string& key) const {
  for (const auto& [k, v] : attributes) {
    if (k == key) return v;
  }
  throw FormatError("table dump lacks attribute '" + key + "'");
}

std::uint64_t TableDump::attribute_u64(const std::string& key) const {
  return to_u64(attribute(key));
}

double TableDump::attribute_double(const std::string& key) const {
  return parse_double(attribute(key));
}

void write_table(std::ostream& out, const TableDump& dump, Encoding encoding) {
  out << kMagic << ' ' << kVersion << ' ' << (encoding == Encoding::Text ? "text" : "binary")
      << '\n';
  out << "kind " << dump.kind << '\n';
  for (const auto& [k, v] : dump.attributes) out << k << ' ' << v << '\n';
  out << "values " << dump.values.size() << '\n';
  if (encoding == Encoding::Text) {
    for (double v : dump.values) out << format_double(v) << '\n';
  } else {
    for (double v : dump.values) {
      const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
      char bytes[8];
      std::memcpy(bytes, &bits, 8);
      out.write(bytes, 8);
    }
  }
  if (!out) throw FormatError("failed to write table dump");
}

TableDump read_table(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty table dump");
  std::istringstream head(line);
  std::string magic, mode;
  int version = 0;
  head >> magic >> version >> mode;
  if (magic != kMagic) throw FormatError("not a raftlab table dump");
  if (version != kVersion) throw FormatError("unsupported table dump version " + std::to_string(version));
  if (mode != "text" && mode != "binary") throw FormatError("unknown encoding '" + mode + "'");

  TableDump dump;
  std::uint64_t count = 0;
  bool have_kind = false;
  while (true) {
    if (!std::getline(in, line)) throw FormatError("truncated table dump header");
    const auto space = line.find(' ');
    if (space == std::string::npos) throw FormatError("malformed header line '" + line + "'");
    std::string key = line.substr(0, space);
    std::string value = line.substr(space + 1);
    if (key == "kind") {
      dump.kind = value;
      have_kind = true;
    } else if (key == "values") {
      count = to_u64(value);
      break;
    } else {
      dump.attributes.emplace_back(std::move(key), std::move(value));
    }
  }
  if (!have_kind) throw FormatError("table dump lacks a kind line");

  dump.values.resize(count);
  if (mode == "text") {
    for (auto& v : dump.values) {
      if (!std::getline(in, line)) throw FormatError("truncated table dump body");
      v = parse_double(line);
    }
  } else {
    for (auto& v : dump.values) {
      char bytes[8];
      if (!in.read(bytes, 8)) throw FormatError("truncated table dump body");
      std::uint64_t bits = 0;
      std::memcpy(&bits, bytes, 8);
      v = std::bit_cast<double>(to_little_endian(bits));
    }
  }
  return dump;
}

void save_table(const std::filesystem::path& path, const TableDump& dump, Encoding encoding) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  write_table(out, dump, encoding);
}

TableDump load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return read_table(in);
}

TableDump to_dump(const Policy& policy) {
  TableDump dump;
  const auto values = logits(policy);
  dump.values.assign(values.begin(), values.end());
  if (const auto* b = std::get_if<BanditPolicy>(&policy)) {
    dump.kind = "bandit";
    dump.attributes = {{"prompts", std::to_string(b->num_prompts())},
                       {"responses", std::to_string(b->num_responses())}};
  } else {
    const auto& s = std::get<SeqPolicy>(policy);
    dump.kind = "seq";
    dump.attributes = {{"prompts", std::to_string(s.num_prompts())},
                       {"vocab", std::to_string(s.vocab())},
                       {"length", std::to_string(s.length())}};
  }
  return dump;
}

Policy policy_from_dump(const TableDump& dump) {
  const auto m = dump.attribute_u64("prompts");
  if (dump.kind == "bandit") {
    return BanditPolicy(m, dump.attribute_u64("responses"), dump.values);
  }
  if (dump.kind == "seq") {
    return SeqPolicy(m, dump.attribute_u64("vocab"), dump.attribute_u64("length"), dump.values);
  }
  throw FormatError("table dump of kind '" + dump.kind + "' is not a policy");
}

void save_policy(const std::filesystem::path& path, const Policy& policy, Encoding encoding) {
  save_table(path, to_dump(policy), encoding);
}

Policy load_policy(const std::filesystem::path& path) { return policy_from_dump(load_table(path)); }

}  // namespace raftlab
