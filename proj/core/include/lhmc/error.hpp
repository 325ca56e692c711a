#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lhmc {

/// Raised when a caller breaks a documented precondition (shape, domain, count).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a computation produces NaN. Carries the tape node that produced it,
/// or npos when the failure did not originate on a tape.
class NumericError : public std::runtime_error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  explicit NumericError(const std::string& what, std::size_t node = npos)
      : std::runtime_error(what), node_(node) {}

  std::size_t node() const noexcept { return node_; }

 private:
  std::size_t node_;
};

/// Malformed input file. `line()` is 1-based and counts the header line.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& msg)
      : std::runtime_error(file + ":" + std::to_string(line) + ": " + msg), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace lhmc
