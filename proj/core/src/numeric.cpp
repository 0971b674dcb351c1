#include "raftlab/numeric.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <system_error>

#include "raftlab/error.hpp"

namespace raftlab {

double pairwise_sum(std::span<const double> values) {
  constexpr std::size_t kBlock = 8;
  if (values.size() <= kBlock) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double v : values) s += std::exp(v - hi);
  return hi + std::log(s);
}

void log_softmax(std::span<const double> values, double temperature,
                 std::span<double> out) {
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = values[i] / temperature;
    hi = std::max(hi, out[i]);
  }
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) s += std::exp(out[i] - hi);
  const double lz = hi + std::log(s);
  for (std::size_t i = 0; i < values.size(); ++i) out[i] -= lz;
}

std::vector<double> softmax(std::span<const double> values, double temperature) {
  std::vector<double> out(values.size());
  log_softmax(values, temperature, out);
  for (double& v : out) v = std::exp(v);
  return out;
}

double entropy(std::span<const double> probabilities) {
  double h = 0.0;
  for (double p : probabilities) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc{} || res.ptr != last) {
    throw FormatError("not a number: '" + text + "'");
  }
  return value;
}

}  // namespace raftlab
