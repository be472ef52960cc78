// Exception hierarchy shared across the library.
#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace gne {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class InfeasibleInstance : public Error {
 public:
  using Error::Error;
};

class NotSupported : public Error {
 public:
  using Error::Error;
};

class InvalidBox : public Error {
 public:
  using Error::Error;
};

class InfeasibleSet : public Error {
 public:
  using Error::Error;
};

/// Iterative method ran out of budget; carries the best iterate seen.
class MaxIterExceeded : public Error {
 public:
  MaxIterExceeded(const std::string& what, Eigen::VectorXd best, double residual)
      : Error(what), best_iterate(std::move(best)), residual(residual) {}
  Eigen::VectorXd best_iterate;
  double residual;
};

class InvalidParams : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class AssumptionViolated : public Error {
 public:
  using Error::Error;
};

class PDCheckFailed : public Error {
 public:
  using Error::Error;
};

class ProjectionFailure : public Error {
 public:
  using Error::Error;
};

class InvalidGamma : public Error {
 public:
  using Error::Error;
};

class NonFiniteIterate : public Error {
 public:
  using Error::Error;
};

class ScheduleExhausted : public Error {
 public:
  using Error::Error;
};

/// Reference solve failed to reach tolerance; carries the best primal iterate.
class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, Eigen::VectorXd best, double residual)
      : Error(what), best_iterate(std::move(best)), residual(residual) {}
  Eigen::VectorXd best_iterate;
  double residual;
};

class NotStrictlyFeasible : public Error {
 public:
  using Error::Error;
};

class MissingReference : public Error {
 public:
  using Error::Error;
};

class InstanceMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace gne
