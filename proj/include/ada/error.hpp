#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ada {

// Shape disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation (e.g. log of 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Class index outside [0, num_classes).
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Violated precondition on an API call.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid configuration value or unknown key.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed input file. Carries the 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// A loss term became NaN or infinite during training.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& term, double value)
      : std::runtime_error("non-finite loss term '" + term + "' (" + std::to_string(value) + ")"),
        term_(term) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

// Dataset does not satisfy what an analysis needs (e.g. a class missing from one domain).
class DataContractError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File could not be opened or written.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ada
