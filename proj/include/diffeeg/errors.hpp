#pragma once

#include <stdexcept>
#include <string>

namespace diffeeg {

// Invalid or unknown configuration. CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed segment store, checkpoint or annotation file. CLI exit code 3.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Evaluation protocol violated, e.g. synthetic data in a test set or a
// single-class fold. CLI exit code 4.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace diffeeg
