#pragma once

#include <stdexcept>

namespace raftlab {

/// A prompt, response, or record that does not belong to the object it was
/// used with.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A hyper-parameter or configuration value outside its valid range.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The response space is larger than the enumeration cap.
class EnumerationError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// A checkpoint, CSV, or config file that cannot be parsed.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace raftlab
