#pragma once

#include <stdexcept>
#include <string>

namespace ulab {

// Bad argument values: fractions out of range, empty id sets, guards.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Shape / dimension mismatches between models, batches and tensors.
class StructuralError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed or incomplete experiment configuration. Maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& msg, int line = 0, std::string field = {})
      : std::runtime_error(format(msg, line, field)), line_(line), field_(std::move(field)) {}

  int line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  static std::string format(const std::string& msg, int line, const std::string& field) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (!field.empty()) out += "field '" + field + "': ";
    return out + msg;
  }

  int line_;
  std::string field_;
};

}  // namespace ulab
