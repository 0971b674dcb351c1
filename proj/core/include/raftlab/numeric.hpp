#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace raftlab {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// log(sigmoid(z)) without overflow for large |z|.
inline double log_sigmoid(double z) {
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

/// Pairwise (cascade) summation in a fixed order; bit-stable for a given input.
double pairwise_sum(std::span<const double> values);

double log_sum_exp(std::span<const double> values);

/// Writes log-softmax(values / temperature) into out (same size).
void log_softmax(std::span<const double> values, double temperature,
                 std::span<double> out);

std::vector<double> softmax(std::span<const double> values, double temperature = 1.0);

double entropy(std::span<const double> probabilities);

/// Shortest decimal representation that round-trips to the same double.
std::string format_double(double value);

/// Inverse of format_double; throws FormatError on malformed input.
double parse_double(const std::string& text);

}  // namespace raftlab
