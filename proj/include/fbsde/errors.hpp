#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fbsde {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration (grid sizes, sample counts, option clashes).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A numeric argument left its admissible domain (e.g. a coupling value
/// outside [0,1]).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Grid-related failures: non-dyadic grid where a dyadic one is required,
/// node lookups that miss, resolution mismatches.
class GridError : public Error {
 public:
  using Error::Error;
};

/// A functional was used with the wrong arity or measurability tag.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Coefficient pack violates a required structural property
/// (missing diffusion split, non-linear z-term, ...).
class StructureError : public Error {
 public:
  using Error::Error;
};

/// Unsupported exponent or missing moment-inequality constants.
class UnsupportedExponentError : public Error {
 public:
  using Error::Error;
};

/// Picard iteration failed to converge; carries the residual history.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, std::vector<double> residuals)
      : Error(what), residual_history(std::move(residuals)) {}

  std::vector<double> residual_history;
};

/// Regression design matrix was rank deficient in strict mode.
class IllConditionedBasisError : public Error {
 public:
  using Error::Error;
};

/// The fitted decoupling map lost the Lipschitz margin required for the
/// next backward step.
class RegularityLossError : public Error {
 public:
  using Error::Error;
};

/// Sample moments failed an integrability sanity check.
class DiagnosticError : public Error {
 public:
  using Error::Error;
};

}  // namespace fbsde
