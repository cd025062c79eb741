#pragma once

#include <stdexcept>
#include <string>

namespace flowcross {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (e.g. non-positive radius).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The requested evaluation lies outside the documented numerically stable
/// region (exponential prefactors would swamp the integral in double precision).
class StabilityError : public Error {
 public:
  using Error::Error;
};

/// Adaptive quadrature ran out of subdivisions. Carries the best estimate.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double best_value, double best_error)
      : Error(what), best_value_(best_value), best_error_(best_error) {}

  double best_value() const noexcept { return best_value_; }
  double best_error() const noexcept { return best_error_; }

 private:
  double best_value_;
  double best_error_;
};

/// Broken internal invariant (noise support exhausted, coverage failure).
class InternalError : public Error {
 public:
  using Error::Error;
};

/// Configuration could not be parsed or failed validation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure, always reported with the offending path.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowcross
