#pragma once

#include <stdexcept>
#include <string>

namespace sympsteer {

/// Base class for all library failures.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Matrix shape incompatible with the declared dimension.
struct DimensionError : Error {
  using Error::Error;
};

/// Candidate matrix fails the symplectic membership test.
struct NotSymplecticError : Error {
  double defect = 0.0;
  NotSymplecticError(const std::string& msg, double d) : Error(msg), defect(d) {}
};

/// Iterative reprojection did not reach the target defect.
struct ProjectionFailureError : Error {
  double defect = 0.0;
  ProjectionFailureError(const std::string& msg, double d) : Error(msg), defect(d) {}
};

/// Integration defect exceeded the blow-up threshold.
struct BlowUpError : Error {
  double defect = 0.0;
  double time = 0.0;
  BlowUpError(const std::string& msg, double d, double t) : Error(msg), defect(d), time(t) {}
};

/// Control grid incompatible with the trajectory grid.
struct GridError : Error {
  using Error::Error;
};

/// Requested bracket depth exceeds the supplied derivative data.
struct InsufficientDerivativeError : Error {
  using Error::Error;
};

/// Input span is numerically zero.
struct DegenerateInputError : Error {
  using Error::Error;
};

/// Gramian of the control basis is rank-deficient or ill-conditioned.
struct BasisDegenerateError : Error {
  double condition = 0.0;
  BasisDegenerateError(const std::string& msg, double c) : Error(msg), condition(c) {}
};

/// Newton iteration exhausted its budget without meeting the residual target.
struct NoConvergenceError : Error {
  double best_residual = 0.0;
  int iterations = 0;
  NoConvergenceError(const std::string& msg, double r, int it)
      : Error(msg), best_residual(r), iterations(it) {}
};

/// Steering target is outside the admissible set (wrong shape or not symplectic).
struct InvalidTargetError : Error {
  using Error::Error;
};

/// Curvature path violates symmetry or shape requirements.
struct InvalidCurvatureError : Error {
  using Error::Error;
};

/// Avoided intervals remove too much support to retain full rank.
struct AvoidanceInfeasibleError : Error {
  using Error::Error;
};

/// Eigenvalue-gap condition fails for the linearized return map.
struct ContrerasFailError : Error {
  double gap = 0.0;
  ContrerasFailError(const std::string& msg, double g) : Error(msg), gap(g) {}
};

/// Problem description file is missing keys or malformed.
struct SpecFileError : Error {
  using Error::Error;
};

}  // namespace sympsteer
