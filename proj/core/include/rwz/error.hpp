#pragma once

#include <stdexcept>
#include <string>

namespace rwz {

// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration or argument (bad schema, dimension mismatch, ...).
struct ConfigError : Error {
  using Error::Error;
};

// A simulated state left the declared bounded box.  Signals a mis-specified
// transition/noise configuration rather than a numerical problem.
struct DomainEscapeError : Error {
  using Error::Error;
};

// A symmetric matrix had an eigenvalue at or below the inversion tolerance.
// Carries the offending eigenvalue so callers can distinguish an exploration
// floor violation from plain bad input.
struct NearSingularError : Error {
  NearSingularError(const std::string& what, double lambda)
      : Error(what), lambda_min(lambda) {}
  double lambda_min;
};

// The summed system matrix is not invertible.
struct SingularSystemError : Error {
  using Error::Error;
};

// A regression was asked to fit more parameters than observations.
struct UnderdeterminedFitError : Error {
  using Error::Error;
};

// A nuisance model was consulted for an episode it was (partly) fitted on.
struct StalenessError : Error {
  using Error::Error;
};

// A quantity that requires the eigenvalue event was requested from a
// zero-fallback estimate.
struct UndefinedEventError : Error {
  using Error::Error;
};

}  // namespace rwz
