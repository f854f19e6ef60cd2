#pragma once

#include <stdexcept>
#include <string>

namespace evograd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument lies outside the domain of the operation (negative radius,
/// point outside a trust-region image, y_max <= y_min, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Cholesky or eigen decomposition failed (matrix not positive definite).
class DecompositionError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration: unknown names, out-of-range hyperparameters,
/// unsupported dimensions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Thrown by the budget meter when no evaluations remain. Optimizers catch it
/// and finalize with their best-so-far point.
class BudgetExhausted : public Error {
 public:
  BudgetExhausted() : Error("evaluation budget exhausted") {}
};

/// Input/output failure while reading or writing records and tables.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace evograd
