#pragma once

#include <stdexcept>
#include <string>

namespace oldroyd {

/// Base class for every failure raised by the library. Callers that only
/// need to distinguish "configuration" from "numerical" problems can catch
/// InvalidArgument separately and treat everything else as numerical.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class AssemblyFailure : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  DimensionMismatch(const std::string& what, long expected, long actual)
      : Error(what + " (expected " + std::to_string(expected) + ", got " +
              std::to_string(actual) + ")"),
        expected_(expected),
        actual_(actual) {}

  long expected() const { return expected_; }
  long actual() const { return actual_; }

 private:
  long expected_;
  long actual_;
};

class DimensionAmbiguity : public Error {
 public:
  using Error::Error;
};

class ConditioningError : public Error {
 public:
  using Error::Error;
};

class SolveFailure : public Error {
 public:
  SolveFailure(const std::string& what, double condition_estimate)
      : Error(what + " (condition estimate " + std::to_string(condition_estimate) + ")"),
        condition_estimate_(condition_estimate) {}

  double condition_estimate() const { return condition_estimate_; }

 private:
  double condition_estimate_;
};

class DiagnosticsError : public Error {
 public:
  using Error::Error;
};

/// The derived kernel coefficient gamma is not positive, so the parameters
/// do not describe an Oldroyd fluid of order one.
class NonPositiveGamma : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// A time step could not be completed (nonlinear iteration stalled or the
/// linear system failed). Carries the step index and the last increment.
class StepFailure : public Error {
 public:
  StepFailure(const std::string& what, long step, double residual)
      : Error(what + " at step " + std::to_string(step) + " (residual " +
              std::to_string(residual) + ")"),
        step_(step),
        residual_(residual) {}

  long step() const { return step_; }
  double residual() const { return residual_; }

 private:
  long step_;
  double residual_;
};

class ExportError : public Error {
 public:
  using Error::Error;
};

}  // namespace oldroyd
