#pragma once

#include "sympsteer/bilinear.hpp"
#include "sympsteer/control_signal.hpp"
#include "sympsteer/core.hpp"
#include "sympsteer/errors.hpp"
#include "sympsteer/symplectic.hpp"

#include <array>
#include <cmath>
#include <utility>
#include <vector>

namespace sympsteer {

/// Quintic smoothstep: exact 0 for x <= 0, exact 1 for x >= 1, C^2 overall.
inline double smoothstep5(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return x * x * x * (10.0 + x * (-15.0 + 6.0 * x));
}

struct Notch {
  double center = 0.0;
  double rho = 0.0;  // the bump is exactly 0 on [center - rho, center + rho]
};

/// Window bump: exactly 0 outside the open window and on every closed notch
/// core, 1 on the plateau, C^2 transitions. Edges rise over edge_fraction of
/// the window length (so the plateau covers the middle 80% by default);
/// notch transitions rise over one extra rho on each side.
class BumpWindow {
 public:
  explicit BumpWindow(Interval window, std::vector<Notch> notches = {},
                      double edge_fraction = 0.1)
      : window_(window), notches_(std::move(notches)) {
    if (!(window_.length() > 0.0)) throw DimensionError("BumpWindow: empty window");
    if (!(edge_fraction > 0.0 && edge_fraction <= 0.5))
      throw DimensionError("BumpWindow: edge fraction must lie in (0, 0.5]");
    rise_ = edge_fraction * window_.length();
    for (const Notch& n : notches_)
      if (!(n.rho > 0.0)) throw DimensionError("BumpWindow: notch half-width must be positive");
  }

  double operator()(double t) const {
    if (t <= window_.lo || t >= window_.hi) return 0.0;
    double v = smoothstep5((t - window_.lo) / rise_) * smoothstep5((window_.hi - t) / rise_);
    for (const Notch& n : notches_) {
      const double d = std::abs(t - n.center);
      if (d <= n.rho) return 0.0;
      v *= smoothstep5((d - n.rho) / n.rho);
    }
    return v;
  }

  /// Where the bump can be nonzero: the window minus the closed notch cores.
  Support support() const {
    Support s{window_};
    for (const Notch& n : notches_) s = s.minus(Interval{n.center - n.rho, n.center + n.rho});
    return s;
  }

  const Interval& window() const { return window_; }
  const std::vector<Notch>& notches() const { return notches_; }

 private:
  Interval window_;
  std::vector<Notch> notches_;
  double rise_;
};

/// Coordinates of a tangent direction Z at base point X in the canonical
/// tangent basis (the basis with X^T J Y_a = S_a): read the symmetric part
/// of X^T J Z off in the symmetric-basis enumeration order.
inline Vector tangent_coordinates(const Matrix& x, const Matrix& z) {
  const int n = static_cast<int>(x.rows());
  const Matrix raw = x.transpose() * symplectic_form(n / 2) * z;
  const Matrix sym = 0.5 * (raw + raw.transpose());
  Vector c(n * (n + 1) / 2);
  int idx = 0;
  for (int a = 0; a < n; ++a) c(idx++) = sym(a, a);
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) c(idx++) = sym(a, b);
  return c;
}

/// Finite family of smooth windowed controls whose endpoint images span the
/// tangent space at the base endpoint. Built via the trace pairing: channel i
/// of the a-th control is chi(t) * tr(Y_a^T S(T) S(t)^{-1} B_i X(t)).
class ControlBasis {
 public:
  ControlBasis(std::vector<ControlSignal> controls, std::vector<Matrix> images,
               ControlSignal base_control, Matrix base_endpoint, Vector gramian_singular_values,
               double mu_estimate, Interval window)
      : controls_(std::move(controls)),
        images_(std::move(images)),
        base_control_(std::move(base_control)),
        base_endpoint_(std::move(base_endpoint)),
        gramian_sv_(std::move(gramian_singular_values)),
        mu_estimate_(mu_estimate),
        window_(window) {}

  int p() const { return static_cast<int>(controls_.size()); }
  const std::vector<ControlSignal>& controls() const { return controls_; }
  const std::vector<Matrix>& images() const { return images_; }
  const ControlSignal& base_control() const { return base_control_; }
  const Matrix& base_endpoint() const { return base_endpoint_; }
  const Vector& gramian_singular_values() const { return gramian_sv_; }
  double gramian_condition() const { return gramian_sv_(0) / gramian_sv_(gramian_sv_.size() - 1); }
  double conditioning_ratio() const { return 1.0 / gramian_condition(); }
  double mu_estimate() const { return mu_estimate_; }
  const Interval& window() const { return window_; }

 private:
  std::vector<ControlSignal> controls_;
  std::vector<Matrix> images_;
  ControlSignal base_control_;
  Matrix base_endpoint_;
  Vector gramian_sv_;
  double mu_estimate_;
  Interval window_;
};

struct BasisOptions {
  std::vector<Notch> notches = {};
  double edge_fraction = 0.1;
  double tol_rank = defaults::tol_rank;
  double cond_refusal = defaults::cond_refusal;
  bool estimate_radius = true;
};

inline Matrix differential_from_images(const Vector& lambda, const std::vector<Matrix>& images) {
  Matrix out = Matrix::Zero(images[0].rows(), images[0].cols());
  for (int a = 0; a < lambda.size(); ++a) out += lambda(a) * images[a];
  return out;
}

/// Builds the p = m(2m+1) windowed trace controls at the base trajectory and
/// certifies that their endpoint images still span the tangent space.
inline ControlBasis build_basis(const BilinearSystem& sys, const SymplecticMatrix& x0,
                                Interval window, const Trajectory& base,
                                const BasisOptions& opts = {}) {
  if (!base.has_fundamental())
    throw GridError("build_basis: base trajectory lacks fundamental samples");
  if (!(window.lo >= 0.0 && window.hi <= sys.horizon() && window.length() > 0.0))
    throw DimensionError("build_basis: window must be a nonempty subinterval of [0, T]");

  const int n = 2 * sys.m();
  const int p = sys.m() * (2 * sys.m() + 1);
  const int nsteps = base.steps();
  const BumpWindow bump(window, opts.notches, opts.edge_fraction);
  const Support support = bump.support();

  // G[j][i] = S(T) S(t_j)^{-1} B_i X(t_j): the integrand of the endpoint
  // differential and the matrix paired against tangent directions.
  const Matrix& s_end = base.fundamental().back();
  std::vector<std::vector<Matrix>> g(static_cast<std::size_t>(nsteps) + 1);
  for (int j = 0; j <= nsteps; ++j) {
    const double chi = bump(base.time_at(j));
    if (chi == 0.0) continue;
    const Matrix& s = base.fundamental_at(j);
    const Matrix sinv = base.fundamental_defect(j) <= 1e-6
                            ? Matrix(symplectic_inverse(s))
                            : Matrix(s.partialPivLu().inverse());
    auto& row = g[static_cast<std::size_t>(j)];
    row.reserve(static_cast<std::size_t>(sys.k()));
    for (int i = 0; i < sys.k(); ++i)
      row.push_back(s_end * sinv * sys.b()[static_cast<std::size_t>(i)] * base.state(j));
  }

  const std::vector<Matrix> tangents = tangent_basis(base.endpoint());
  std::vector<ControlSignal> controls;
  controls.reserve(static_cast<std::size_t>(p));
  for (int a = 0; a < p; ++a) {
    Matrix samples = Matrix::Zero(nsteps + 1, sys.k());
    for (int j = 0; j <= nsteps; ++j) {
      const double chi = bump(base.time_at(j));
      if (chi == 0.0) continue;
      const auto& row = g[static_cast<std::size_t>(j)];
      for (int i = 0; i < sys.k(); ++i)
        samples(j, i) = chi * (tangents[static_cast<std::size_t>(a)].array() *
                               row[static_cast<std::size_t>(i)].array())
                                  .sum();
    }
    controls.emplace_back(std::move(samples), sys.horizon(), support);
  }

  std::vector<Matrix> images;
  images.reserve(static_cast<std::size_t>(p));
  Matrix coords(p, p);
  for (int a = 0; a < p; ++a) {
    images.push_back(endpoint_differential(sys, x0, base, controls[static_cast<std::size_t>(a)]));
    coords.col(a) = tangent_coordinates(base.endpoint(), images.back());
  }

  Eigen::JacobiSVD<Matrix> svd(coords);
  const Vector sv = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv(i) > opts.tol_rank * sv(0)) ++rank;
  const Vector gram_sv = sv.array().square();
  const double cond = gram_sv(0) / gram_sv(gram_sv.size() - 1);
  if (rank < p)
    throw BasisDegenerateError("build_basis: endpoint images have rank " + std::to_string(rank) +
                                   " < " + std::to_string(p) +
                                   " (window too small or system not controllable there)",
                               cond);
  if (cond > opts.cond_refusal)
    throw BasisDegenerateError(
        "build_basis: Gramian condition " + num_str(cond) + " exceeds the refusal bound",
        cond);

  // Attraction-radius estimate: one probe of the Jacobian's Lipschitz
  // constant in tangent coordinates, then 0.1 * sigma_min / L.
  double mu = std::numeric_limits<double>::infinity();
  if (opts.estimate_radius) {
    const double eps = 1e-3;
    Vector probe = Vector::Zero(p);
    probe(0) = eps;
    const ControlSignal u_probe = linear_combination(base.control(), probe, controls);
    PropagateOptions popts;
    popts.with_fundamental = true;
    const Trajectory probe_traj = propagate(sys, x0, u_probe, nsteps, popts);
    Matrix coords_probe(p, p);
    for (int a = 0; a < p; ++a)
      coords_probe.col(a) = tangent_coordinates(
          probe_traj.endpoint(),
          endpoint_differential(sys, x0, probe_traj, controls[static_cast<std::size_t>(a)]));
    const double lipschitz = (coords_probe - coords).norm() / eps;
    if (lipschitz > 0.0) mu = 0.1 * sv(sv.size() - 1) / lipschitz;
  }

  return ControlBasis(std::move(controls), std::move(images), base.control(), base.endpoint(),
                      gram_sv, mu, window);
}

/// Result of the damped-Newton steering solve.
struct SteeringSolution {
  Vector lambda;
  ControlSignal control;
  SymplecticMatrix achieved;
  double residual = 0.0;
  int iterations = 0;
  std::array<double, 5> norms{};  // discrete derivative sup-norms, orders 0..4
  bool radius_warning = false;    // target farther than the estimated radius
};

/// Max of the discrete derivative sup-norms of the solution control over
/// orders 0..k (k <= 4): the certified stand-in for the C^k control norm.
inline double norm_certificate(const SteeringSolution& sol, int k) {
  if (k < 0 || k > 4) throw DimensionError("norm_certificate: order must be in 0..4");
  double worst = 0.0;
  for (int o = 0; o <= k; ++o) worst = std::max(worst, sol.norms[static_cast<std::size_t>(o)]);
  return worst;
}

/// Damped Newton on F(lambda) = E(base + sum lambda_a u^a): least-squares
/// step on the full matrix residual, backtracking by halving until the
/// Frobenius residual decreases. Targets already at the base endpoint solve
/// in zero iterations.
inline SteeringSolution newton_steer(const BilinearSystem& sys, const SymplecticMatrix& x0,
                                     const ControlBasis& basis, const SymplecticMatrix& target,
                                     double tol_steer = defaults::tol_steer,
                                     int max_iter = defaults::max_newton_iters,
                                     int max_halvings = defaults::max_halvings) {
  const int n = 2 * sys.m();
  if (target.value().rows() != n)
    throw InvalidTargetError("newton_steer: target dimension does not match the system");
  if (target.defect() > defaults::tol_symp)
    throw InvalidTargetError("newton_steer: target defect " + num_str(target.defect()) +
                             " exceeds the group tolerance");
  if (basis.gramian_condition() > defaults::cond_refusal)
    throw BasisDegenerateError("newton_steer: basis Gramian is too ill-conditioned",
                               basis.gramian_condition());

  const int p = basis.p();
  const int nsteps = basis.base_control().grid();
  const auto residual_of = [&](const Matrix& e) { return (e - target.value()).norm(); };

  Vector lambda = Vector::Zero(p);
  Matrix cur_end = basis.base_endpoint();
  double cur_res = residual_of(cur_end);
  const bool warn = cur_res > basis.mu_estimate();
  double best_res = cur_res;

  PropagateOptions fund_opts;
  fund_opts.with_fundamental = true;

  int iterations = 0;
  while (cur_res > tol_steer) {
    if (iterations >= max_iter)
      throw NoConvergenceError("newton_steer: residual " + num_str(best_res) + " after " +
                                   std::to_string(iterations) + " iterations",
                               best_res, iterations);

    Matrix jac(n * n, p);
    if (iterations == 0 && lambda.isZero(0.0)) {
      for (int a = 0; a < p; ++a) jac.col(a) = vectorize(basis.images()[a]);
    } else {
      const ControlSignal u_cur = linear_combination(basis.base_control(), lambda,
                                                     basis.controls());
      const Trajectory traj = propagate(sys, x0, u_cur, nsteps, fund_opts);
      for (int a = 0; a < p; ++a)
        jac.col(a) =
            vectorize(endpoint_differential(sys, x0, traj, basis.controls()[a]));
    }

    const Matrix diff = cur_end - target.value();
    const Vector step = jac.colPivHouseholderQr().solve(-vectorize(diff));

    bool accepted = false;
    double alpha = 1.0;
    for (int halving = 0; halving <= max_halvings; ++halving, alpha *= 0.5) {
      const Vector trial = lambda + alpha * step;
      const ControlSignal u_trial = linear_combination(basis.base_control(), trial,
                                                       basis.controls());
      const Matrix e_trial = propagate(sys, x0, u_trial, nsteps).endpoint();
      const double r_trial = residual_of(e_trial);
      if (r_trial < cur_res) {
        lambda = trial;
        cur_end = e_trial;
        cur_res = r_trial;
        best_res = std::min(best_res, cur_res);
        accepted = true;
        break;
      }
    }
    ++iterations;
    if (!accepted)
      throw NoConvergenceError("newton_steer: backtracking stalled at residual " +
                                   num_str(cur_res),
                               best_res, iterations);
  }

  SteeringSolution sol{.lambda = lambda,
                       .control = linear_combination(basis.base_control(), lambda,
                                                     basis.controls()),
                       .achieved = SymplecticMatrix(cur_end, defaults::tol_traj),
                       .residual = cur_res,
                       .iterations = iterations,
                       .norms = {},
                       .radius_warning = warn};
  sol.norms = sol.control.derivative_sup_norms();
  return sol;
}

}  // namespace sympsteer
