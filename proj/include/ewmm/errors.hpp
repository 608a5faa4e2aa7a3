#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ewmm {

// Invalid arguments are reported with std::invalid_argument. The types below
// cover failures callers are expected to distinguish.

/// Cholesky factorization hit a nonpositive pivot.
class NotPositiveDefinite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The quadratic-fit design matrix does not determine every coefficient.
class RankDeficient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A solver could not make progress (non-finite values, indefinite Hessian).
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Probe sampling for tail fitting never landed inside the parameter domain.
class DomainSamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Experiment configuration is invalid or inconsistent.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data could not be read or parsed. `line()` is 1-based, 0 if unknown.
class DataError : public std::runtime_error {
 public:
  DataError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }
  /// Same error with context (such as a file name) prepended to the message.
  DataError prefixed(const std::string& prefix) const { return DataError(prefix + what(), line_, Raw{}); }

 private:
  struct Raw {};
  DataError(const std::string& message, std::size_t line, Raw) : std::runtime_error(message), line_(line) {}
  std::size_t line_;
};

}  // namespace ewmm
