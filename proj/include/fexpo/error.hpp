#pragma once

#include <stdexcept>
#include <string>

namespace fexpo {

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Cholesky factorization hit a non-positive pivot.
class FactorizationError : public std::runtime_error {
 public:
  FactorizationError(std::size_t pivot, double value)
      : std::runtime_error("Cholesky factorization failed at pivot " + std::to_string(pivot) +
                           " (value " + std::to_string(value) + ")"),
        pivot_(pivot),
        value_(value) {}
  std::size_t pivot() const noexcept { return pivot_; }
  double value() const noexcept { return value_; }

 private:
  std::size_t pivot_;
  double value_;
};

// Circulant embedding produced a negative eigenvalue.
class EmbeddingError : public std::runtime_error {
 public:
  explicit EmbeddingError(double most_negative)
      : std::runtime_error("circulant embedding is not nonnegative definite; most negative eigenvalue " +
                           std::to_string(most_negative)),
        most_negative_(most_negative) {}
  double most_negative() const noexcept { return most_negative_; }

 private:
  double most_negative_;
};

// Exponent would leave the representable range.
class RangeError : public std::range_error {
 public:
  using std::range_error::range_error;
};

// Operands that must come from the same source (grid, coupled set, sample size) do not.
class MismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fexpo
