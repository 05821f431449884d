#pragma once

#include <stdexcept>
#include <string>

namespace pbcox {

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Combinatorial method refused because the work would exceed its cap.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// Malformed input file. Carries 1-based row (0 = header/file level) and column name.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t row = 0, std::string column = {})
      : std::runtime_error(what), row_(row), column_(std::move(column)) {}

  std::size_t row() const noexcept { return row_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t row_;
  std::string column_;
};

// Data that parses but cannot support the requested structure (no events, too few rows).
class StructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Zero-variance covariate, singular information matrix and similar.
class DegenerateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical corruption detected while evaluating a likelihood.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pbcox
