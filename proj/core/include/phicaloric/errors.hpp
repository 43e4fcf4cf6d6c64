#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace phicaloric {

// Base class for all toolkit errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A constructed object or a sampled quantity violates the standing structure
// assumptions (convexity, positive monotone derivative, bounded curvature
// ratio, almost-increasing rho, ...).  The message names the offending value.
class AssumptionViolation : public Error {
 public:
  using Error::Error;
};

// Argument outside the admissible domain (negative t, empty region, level
// above the data range, ...).
class OutOfDomain : public Error {
 public:
  using Error::Error;
};

// Invalid or inconsistent configuration.  `pointer` is a JSON-pointer-style
// path into the offending configuration node.
class ConfigError : public Error {
 public:
  ConfigError(std::string pointer, const std::string& what)
      : Error(pointer + ": " + what), pointer_(std::move(pointer)) {}
  const std::string& pointer() const { return pointer_; }

 private:
  std::string pointer_;
};

// A nonlinear or linear iteration failed to reach its tolerance.
class NonConvergence : public Error {
 public:
  using Error::Error;
};

// NaN or Inf encountered in a state vector.
class NumericalBlowup : public Error {
 public:
  using Error::Error;
};

}  // namespace phicaloric
