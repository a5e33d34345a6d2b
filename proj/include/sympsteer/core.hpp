#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>

namespace sympsteer {

/// Compact decimal rendering for diagnostics (std::to_string pads small
/// magnitudes down to "0.000000").
inline std::string num_str(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Library-wide default tolerances and step counts.
namespace defaults {
constexpr double tol_symp = 1e-9;   // symplectic membership
constexpr double tol_traj = 1e-8;   // per-state defect along trajectories
constexpr double tol_rank = 1e-9;   // relative singular-value cutoff
constexpr double tol_steer = 1e-9;  // Newton residual target
constexpr double gap_tol = 1e-3;    // eigenvalue-gap threshold
constexpr int grid_points = 1000;   // control grid intervals on [0, T]
constexpr int steps = 1000;         // integrator steps on [0, T]
constexpr int reproject_interval = 50;
constexpr int max_reproject_iters = 50;
constexpr int max_newton_iters = 25;
constexpr int max_halvings = 8;
constexpr double blowup_defect = 0.1;
constexpr double cond_refusal = 1e12;  // Gramian conditioning refusal
}  // namespace defaults

/// The standard symplectic form [[0, I], [-I, 0]] of size 2m x 2m.
inline Matrix symplectic_form(int m) {
  Matrix j = Matrix::Zero(2 * m, 2 * m);
  j.topRightCorner(m, m) = Matrix::Identity(m, m);
  j.bottomLeftCorner(m, m) = -Matrix::Identity(m, m);
  return j;
}

inline double max_abs(const Matrix& a) {
  return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

/// Max-norm distance of a from its own transpose.
inline double symmetry_defect(const Matrix& a) { return max_abs(a - a.transpose()); }

inline Eigen::Map<const Vector> vectorize(const Matrix& a) {
  return Eigen::Map<const Vector>(a.data(), a.size());
}

}  // namespace sympsteer
