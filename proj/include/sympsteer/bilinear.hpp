#pragma once

#include "sympsteer/control_signal.hpp"
#include "sympsteer/core.hpp"
#include "sympsteer/errors.hpp"
#include "sympsteer/symplectic.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace sympsteer {

/// Time-indexed matrix coefficient t -> 2m x 2m, either analytic (callable)
/// or sampled on a uniform grid with cubic Hermite interpolation.
class MatrixPath {
 public:
  MatrixPath() = default;
  explicit MatrixPath(std::function<Matrix(double)> f) : f_(std::move(f)) {}

  static MatrixPath constant(const Matrix& a) {
    return MatrixPath([a](double) { return a; });
  }

  static MatrixPath sampled(std::vector<Matrix> samples, double horizon) {
    if (samples.size() < 2) throw DimensionError("MatrixPath::sampled: need at least 2 samples");
    auto data = std::make_shared<Sampled>();
    data->h = horizon / static_cast<double>(samples.size() - 1);
    data->horizon = horizon;
    data->slopes = fd_slopes(samples, data->h);
    data->samples = std::move(samples);
    return MatrixPath([data](double t) { return data->eval(t); });
  }

  Matrix operator()(double t) const { return f_(t); }
  bool valid() const { return static_cast<bool>(f_); }

 private:
  struct Sampled {
    std::vector<Matrix> samples;
    std::vector<Matrix> slopes;
    double h = 0.0;
    double horizon = 0.0;

    Matrix eval(double t) const {
      t = std::clamp(t, 0.0, horizon);
      const int n = static_cast<int>(samples.size()) - 1;
      int j = std::clamp(static_cast<int>(std::floor(t / h)), 0, n - 1);
      const double s = (t - j * h) / h;
      const double s2 = s * s, s3 = s2 * s;
      return (2 * s3 - 3 * s2 + 1) * samples[j] + ((s3 - 2 * s2 + s) * h) * slopes[j] +
             (-2 * s3 + 3 * s2) * samples[j + 1] + ((s3 - s2) * h) * slopes[j + 1];
    }
  };

  static std::vector<Matrix> fd_slopes(const std::vector<Matrix>& f, double h) {
    const int n = static_cast<int>(f.size()) - 1;
    std::vector<Matrix> s(n + 1);
    if (n == 1) {
      s[0] = (f[1] - f[0]) / h;
      s[1] = s[0];
      return s;
    }
    s[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    for (int j = 1; j < n; ++j) s[j] = (f[j + 1] - f[j - 1]) / (2.0 * h);
    s[n] = (3.0 * f[n] - 4.0 * f[n - 1] + f[n - 2]) / (2.0 * h);
    return s;
  }

  std::function<Matrix(double)> f_;
};

/// The controlled matrix ODE dX/dt = A(t)X + sum_i u_i(t) B_i X on [0, T].
/// J A(t) and J B_i must be symmetric (this keeps the symplectic group
/// invariant under the flow); A_dot must be the actual derivative of A.
/// Optional higher paths supply d^2 A/dt^2, d^3 A/dt^3, ... analytically;
/// one further order can always be finite-differenced on demand.
class BilinearSystem {
 public:
  BilinearSystem(int m, double horizon, MatrixPath a, MatrixPath a_dot, std::vector<Matrix> b,
                 std::vector<MatrixPath> higher = {})
      : m_(m),
        horizon_(horizon),
        a_(std::move(a)),
        a_dot_(std::move(a_dot)),
        b_(std::move(b)),
        higher_(std::move(higher)) {
    if (m_ < 1) throw DimensionError("BilinearSystem: m must be positive");
    if (horizon_ <= 0.0) throw DimensionError("BilinearSystem: horizon must be positive");
    if (b_.empty()) throw DimensionError("BilinearSystem: need at least one control channel");
    if (!a_.valid() || !a_dot_.valid())
      throw DimensionError("BilinearSystem: A and A_dot paths are required");

    const int n = 2 * m_;
    const Matrix j = symplectic_form(m_);
    for (std::size_t i = 0; i < b_.size(); ++i) {
      if (b_[i].rows() != n || b_[i].cols() != n)
        throw DimensionError("BilinearSystem: B[" + std::to_string(i) + "] has wrong shape");
      const double defect = symmetry_defect(j * b_[i]);
      if (defect > defaults::tol_symp)
        throw NotSymplecticError(
            "BilinearSystem: J*B[" + std::to_string(i) + "] is not symmetric", defect);
    }

    // Probe a fixed set of times for the J-symmetry of A and the
    // consistency of A_dot with a centered difference of A.
    const double fd_h = 1e-4 * horizon_;
    for (int q = 0; q <= 8; ++q) {
      const double t = horizon_ * q / 8.0;
      const Matrix at = a_(t);
      if (at.rows() != n || at.cols() != n)
        throw DimensionError("BilinearSystem: A(t) has wrong shape");
      const double defect = symmetry_defect(j * at);
      if (defect > defaults::tol_symp)
        throw NotSymplecticError("BilinearSystem: J*A(t) is not symmetric at t = " +
                                     num_str(t),
                                 defect);
      if (t - fd_h < 0.0 || t + fd_h > horizon_) continue;
      const Matrix fd = (a_(t + fd_h) - a_(t - fd_h)) / (2.0 * fd_h);
      const Matrix ad = a_dot_(t);
      if (max_abs(fd - ad) > 1e-3 * (1.0 + max_abs(ad)))
        throw Error("BilinearSystem: A_dot disagrees with centered difference of A at t = " +
                    num_str(t));
    }
  }

  int m() const { return m_; }
  int k() const { return static_cast<int>(b_.size()); }
  double horizon() const { return horizon_; }
  const std::vector<Matrix>& b() const { return b_; }
  Matrix a(double t) const { return a_(t); }
  Matrix a_dot(double t) const { return a_dot_(t); }

  /// Orders of d^o A/dt^o available without finite differencing.
  int analytic_orders() const { return 1 + static_cast<int>(higher_.size()); }

  /// d^order A/dt^order at t. Orders beyond the analytic data are extended
  /// by at most `fd_allowance` centered differences of the last analytic
  /// path; beyond that the request is refused.
  Matrix a_deriv(int order, double t, int fd_allowance = 1) const {
    if (order == 0) return a_(t);
    if (order == 1) return a_dot_(t);
    if (order - 2 < static_cast<int>(higher_.size())) return higher_[order - 2](t);
    const int excess = order - analytic_orders();
    if (excess > fd_allowance)
      throw InsufficientDerivativeError(
          "BilinearSystem: derivative order " + std::to_string(order) +
          " of A requested but only " + std::to_string(analytic_orders()) +
          " analytic orders are available; supply higher derivatives or raise the "
          "finite-difference allowance");
    const double h = 6e-6 * horizon_;
    const double tl = std::max(0.0, t - h), tr = std::min(horizon_, t + h);
    return (a_deriv(order - 1, tr, fd_allowance) - a_deriv(order - 1, tl, fd_allowance)) /
           (tr - tl);
  }

 private:
  int m_;
  double horizon_;
  MatrixPath a_;
  MatrixPath a_dot_;
  std::vector<Matrix> b_;
  std::vector<MatrixPath> higher_;
};

/// Discrete solution of the controlled ODE on a uniform step grid. Holds the
/// states X(t_j), and, when requested, the fundamental solution S(t_j) of the
/// linear system along the same control (dS/dt = (A + sum u_i B_i) S from I;
/// for u = 0 this is the propagator of the drift). Every stored matrix is
/// certified to have symplectic defect <= tol.
class Trajectory {
 public:
  Trajectory(double t_begin, double t_end, std::vector<Matrix> states, std::vector<double> defects,
             std::vector<Matrix> fundamental, std::vector<double> fundamental_defects,
             ControlSignal control, double tol)
      : t_begin_(t_begin),
        t_end_(t_end),
        states_(std::move(states)),
        defects_(std::move(defects)),
        fundamental_(std::move(fundamental)),
        fundamental_defects_(std::move(fundamental_defects)),
        control_(std::move(control)) {
    double worst = 0.0;
    for (double d : defects_) worst = std::max(worst, d);
    for (double d : fundamental_defects_) worst = std::max(worst, d);
    max_defect_ = worst;
    if (max_defect_ > tol)
      throw NotSymplecticError("Trajectory: stored defect " + num_str(max_defect_) +
                                   " exceeds tolerance " + num_str(tol),
                               max_defect_);
  }

  double t_begin() const { return t_begin_; }
  double t_end() const { return t_end_; }
  int steps() const { return static_cast<int>(states_.size()) - 1; }
  double dt() const { return (t_end_ - t_begin_) / steps(); }
  double time_at(int j) const { return t_begin_ + j * dt(); }

  const std::vector<Matrix>& states() const { return states_; }
  const Matrix& state(int j) const { return states_[static_cast<std::size_t>(j)]; }
  const Matrix& endpoint() const { return states_.back(); }
  double defect(int j) const { return defects_[static_cast<std::size_t>(j)]; }
  double max_defect() const { return max_defect_; }

  bool has_fundamental() const { return !fundamental_.empty(); }
  const std::vector<Matrix>& fundamental() const { return fundamental_; }
  const Matrix& fundamental_at(int j) const { return fundamental_[static_cast<std::size_t>(j)]; }
  double fundamental_defect(int j) const {
    return fundamental_defects_[static_cast<std::size_t>(j)];
  }

  const ControlSignal& control() const { return control_; }

 private:
  double t_begin_, t_end_;
  std::vector<Matrix> states_;
  std::vector<double> defects_;
  std::vector<Matrix> fundamental_;
  std::vector<double> fundamental_defects_;
  ControlSignal control_;
  double max_defect_;
};

struct PropagateOptions {
  int reproject_interval = defaults::reproject_interval;  // 0 disables
  bool with_fundamental = false;
  double tol_traj = defaults::tol_traj;
  double blowup_defect = defaults::blowup_defect;
};

/// Classical fixed-step 4th-order integration over [t_begin, t_end]. Control
/// times are absolute (the signal lives on [0, T] regardless of the range).
inline Trajectory propagate_range(const BilinearSystem& sys, const Matrix& x_begin,
                                  const ControlSignal& u, double t_begin, double t_end, int steps,
                                  const PropagateOptions& opts = {}) {
  if (u.channels() != sys.k())
    throw GridError("propagate: control has " + std::to_string(u.channels()) +
                    " channels, system has " + std::to_string(sys.k()));
  const int n = 2 * sys.m();
  if (x_begin.rows() != n || x_begin.cols() != n)
    throw DimensionError("propagate: initial condition has wrong shape");
  if (steps < 1) throw DimensionError("propagate: need at least one step");

  const Matrix j = symplectic_form(sys.m());
  const auto defect_of = [&](const Matrix& x) { return max_abs(x.transpose() * j * x - j); };
  const auto system_matrix = [&](double t) {
    Matrix mt = sys.a(t);
    const Vector ut = u.eval(t);
    for (int i = 0; i < sys.k(); ++i) mt += ut(i) * sys.b()[i];
    return mt;
  };
  const auto rk4_step = [](const Matrix& m1, const Matrix& m2, const Matrix& m4, double h,
                           const Matrix& x) {
    const Matrix k1 = m1 * x;
    const Matrix k2 = m2 * (x + (h / 2.0) * k1);
    const Matrix k3 = m2 * (x + (h / 2.0) * k2);
    const Matrix k4 = m4 * (x + h * k3);
    return Matrix(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
  };

  const double h = (t_end - t_begin) / steps;
  std::vector<Matrix> states, fund;
  std::vector<double> defects, fund_defects;
  states.reserve(steps + 1);
  defects.reserve(steps + 1);
  Matrix x = x_begin;
  Matrix s;
  states.push_back(x);
  defects.push_back(defect_of(x));
  if (opts.with_fundamental) {
    fund.reserve(steps + 1);
    fund_defects.reserve(steps + 1);
    s = Matrix::Identity(n, n);
    fund.push_back(s);
    fund_defects.push_back(0.0);
  }

  for (int i = 1; i <= steps; ++i) {
    const double t = t_begin + (i - 1) * h;
    const Matrix m1 = system_matrix(t);
    const Matrix m2 = system_matrix(t + h / 2.0);
    const Matrix m4 = system_matrix(t + h);
    x = rk4_step(m1, m2, m4, h, x);
    if (opts.with_fundamental) s = rk4_step(m1, m2, m4, h, s);

    double d = defect_of(x);
    if (!(d <= opts.blowup_defect))
      throw BlowUpError("propagate: defect " + num_str(d) + " at t = " +
                            num_str(t + h) + " exceeds the blow-up threshold",
                        d, t + h);
    if (opts.reproject_interval > 0 && i % opts.reproject_interval == 0) {
      x = reproject(x).value();
      d = defect_of(x);
      if (opts.with_fundamental) s = reproject(s).value();
    }
    states.push_back(x);
    defects.push_back(d);
    if (opts.with_fundamental) {
      fund.push_back(s);
      fund_defects.push_back(defect_of(s));
    }
  }

  return Trajectory(t_begin, t_end, std::move(states), std::move(defects), std::move(fund),
                    std::move(fund_defects), u, opts.tol_traj);
}

inline Trajectory propagate(const BilinearSystem& sys, const SymplecticMatrix& x0,
                            const ControlSignal& u, int steps = defaults::steps,
                            const PropagateOptions& opts = {}) {
  if (u.horizon() != sys.horizon())
    throw GridError("propagate: control horizon differs from system horizon");
  return propagate_range(sys, x0.value(), u, 0.0, sys.horizon(), steps, opts);
}

/// Final state of propagate: the End-Point value of the control.
inline SymplecticMatrix endpoint(const BilinearSystem& sys, const SymplecticMatrix& x0,
                                 const ControlSignal& u, int steps = defaults::steps,
                                 const PropagateOptions& opts = {}) {
  return SymplecticMatrix(propagate(sys, x0, u, steps, opts).endpoint(), opts.tol_traj);
}

/// Composite Simpson weights on n uniform intervals of width h. Odd n >= 3
/// uses Simpson on the first n-3 intervals and the 3/8 rule on the last 3;
/// n = 1 degrades to the trapezoid rule.
inline std::vector<double> simpson_weights(int n, double h) {
  std::vector<double> w(static_cast<std::size_t>(n) + 1, 0.0);
  if (n == 1) {
    w[0] = w[1] = h / 2.0;
    return w;
  }
  int even_part = (n % 2 == 0) ? n : n - 3;
  if (even_part > 0) {
    w[0] += h / 3.0;
    w[even_part] += h / 3.0;
    for (int j = 1; j < even_part; ++j) w[j] += (j % 2 == 1) ? 4.0 * h / 3.0 : 2.0 * h / 3.0;
  }
  if (n % 2 == 1) {
    const double c = 3.0 * h / 8.0;
    w[n - 3] += c;
    w[n - 2] += 3.0 * c;
    w[n - 1] += 3.0 * c;
    w[n] += c;
  }
  return w;
}

/// Derivative of the End-Point map at the base trajectory's control, applied
/// to the direction v:
///   Y(T) = S(T) * integral_0^T sum_i v_i(t) S(t)^{-1} B_i X(t) dt,
/// where S is the fundamental solution along the base control. Quadrature is
/// composite Simpson on the shared grid. The result is tangent at X(T).
inline Matrix endpoint_differential(const BilinearSystem& sys, const SymplecticMatrix& x0,
                                    const Trajectory& base, const ControlSignal& v) {
  if (!base.has_fundamental())
    throw GridError("endpoint_differential: base trajectory lacks fundamental samples");
  if (v.channels() != sys.k())
    throw GridError("endpoint_differential: direction channel count mismatch");
  if (v.grid() != base.steps() || v.horizon() != sys.horizon() || base.t_begin() != 0.0 ||
      base.t_end() != sys.horizon())
    throw GridError("endpoint_differential: direction grid does not match the trajectory grid");
  if (max_abs(x0.value() - base.state(0)) != 0.0)
    throw GridError("endpoint_differential: trajectory does not start at x0");

  const int nsteps = base.steps();
  const int n = 2 * sys.m();
  const std::vector<double> w = simpson_weights(nsteps, base.dt());
  Matrix acc = Matrix::Zero(n, n);
  for (int jj = 0; jj <= nsteps; ++jj) {
    Matrix q = Matrix::Zero(n, n);
    bool any = false;
    for (int i = 0; i < sys.k(); ++i) {
      const double vi = v.samples()(jj, i);
      if (vi != 0.0) {
        q += vi * sys.b()[i];
        any = true;
      }
    }
    if (!any || w[jj] == 0.0) continue;
    const Matrix& s = base.fundamental_at(jj);
    const Matrix sinv = base.fundamental_defect(jj) <= 1e-6
                            ? Matrix(symplectic_inverse(s))
                            : Matrix(s.partialPivLu().inverse());
    acc += w[jj] * (sinv * q * base.state(jj));
  }
  return base.fundamental().back() * acc;
}

}  // namespace sympsteer
