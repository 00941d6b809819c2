#pragma once

#include <stdexcept>
#include <string>

#include "gpgrad/types.hpp"

namespace gpgrad {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MeshError : Error {
  using Error::Error;
};

struct InterpolationError : Error {
  using Error::Error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct AdmissibilityError : Error {
  using Error::Error;
};

struct PolicyError : Error {
  using Error::Error;
};

struct ConstraintError : Error {
  using Error::Error;
};

struct PhaseError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

/// Linear solve hit the iteration cap; carries the best iterate found.
struct SolveError : Error {
  SolveError(const std::string& msg, Vec best, double achieved_relres, int iters)
      : Error(msg), best_iterate(std::move(best)), relres(achieved_relres), iterations(iters) {}
  Vec best_iterate;
  double relres;
  int iterations;
};

/// Eigensolver did not reach tolerance for all requested pairs.
struct EigenError : Error {
  EigenError(const std::string& msg, int converged_count)
      : Error(msg), converged(converged_count) {}
  int converged;
};

struct DissipationError : Error {
  using Error::Error;
};

}  // namespace gpgrad
