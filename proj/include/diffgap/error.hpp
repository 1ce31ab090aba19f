#pragma once

#include <stdexcept>
#include <string>

namespace diffgap {

// Raised when a caller breaks an operation's precondition (shape, range, ...).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised while decoding a corpus or checkpoint file. `section()` names the
// part of the file that could not be read.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string section, const std::string& what)
      : std::runtime_error(section + ": " + what), section_(std::move(section)) {}

  const std::string& section() const noexcept { return section_; }

 private:
  std::string section_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Loss became non-finite during optimization.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace diffgap
