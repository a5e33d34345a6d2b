#pragma once

#include "sympsteer/bilinear.hpp"
#include "sympsteer/core.hpp"
#include "sympsteer/errors.hpp"
#include "sympsteer/rng.hpp"
#include "sympsteer/steering.hpp"
#include "sympsteer/symplectic.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace sympsteer {

enum class CurvaturePreset { constant, diagonal_affine, sampled };

/// Symmetric curvature matrix K(t) along a unit-speed geodesic, normalized to
/// the unit time interval and held on a uniform grid. Preset paths carry
/// their derivative (and a vanishing second derivative) analytically; raw
/// sample paths fall back to Hermite interpolation with difference slopes.
class CurvaturePath {
 public:
  static CurvaturePath constant(const Matrix& k, int grid = defaults::grid_points) {
    check_curvature_sample(k, 0);
    CurvaturePath p(static_cast<int>(k.rows()), grid, CurvaturePreset::constant);
    const Matrix zero = Matrix::Zero(k.rows(), k.cols());
    p.k_path_ = MatrixPath::constant(k);
    p.k_dot_path_ = MatrixPath::constant(zero);
    p.second_derivative_vanishes_ = true;
    p.fill_samples();
    return p;
  }

  /// K(t) = diag(a_1 + b_1 t, ..., a_m + b_m t).
  static CurvaturePath diagonal_affine(const Vector& a, const Vector& b,
                                       int grid = defaults::grid_points) {
    if (a.size() != b.size() || a.size() < 1)
      throw InvalidCurvatureError("CurvaturePath: offset and slope sizes differ");
    const int m = static_cast<int>(a.size());
    CurvaturePath p(m, grid, CurvaturePreset::diagonal_affine);
    p.k_path_ = MatrixPath([a, b](double t) { return Matrix((a + t * b).asDiagonal()); });
    p.k_dot_path_ = MatrixPath::constant(Matrix(b.asDiagonal()));
    p.second_derivative_vanishes_ = true;
    p.fill_samples();
    return p;
  }

  /// Uniform grid of samples over [0, 1]; k_dot samples optional (difference
  /// slopes of the interpolant otherwise).
  static CurvaturePath sampled(std::vector<Matrix> k, std::vector<Matrix> k_dot = {}) {
    if (k.size() < 2) throw InvalidCurvatureError("CurvaturePath: need at least 2 samples");
    if (!k_dot.empty() && k_dot.size() != k.size())
      throw InvalidCurvatureError("CurvaturePath: K and K_dot sample counts differ");
    const int m = static_cast<int>(k.front().rows());
    for (std::size_t j = 0; j < k.size(); ++j) {
      if (k[j].rows() != m || k[j].cols() != m)
        throw InvalidCurvatureError("CurvaturePath: inconsistent sample shapes");
      check_curvature_sample(k[j], static_cast<int>(j));
    }
    CurvaturePath p(m, static_cast<int>(k.size()) - 1, CurvaturePreset::sampled);
    p.k_path_ = MatrixPath::sampled(k, 1.0);
    if (k_dot.empty()) {
      const double h = 1.0 / static_cast<double>(k.size() - 1);
      std::vector<Matrix> slopes(k.size());
      const int n = static_cast<int>(k.size()) - 1;
      slopes[0] = n == 1 ? Matrix((k[1] - k[0]) / h)
                         : Matrix((-3.0 * k[0] + 4.0 * k[1] - k[2]) / (2.0 * h));
      for (int j = 1; j < n; ++j)
        slopes[static_cast<std::size_t>(j)] =
            (k[static_cast<std::size_t>(j) + 1] - k[static_cast<std::size_t>(j) - 1]) / (2.0 * h);
      slopes[static_cast<std::size_t>(n)] =
          n == 1 ? slopes[0]
                 : Matrix((3.0 * k[static_cast<std::size_t>(n)] -
                           4.0 * k[static_cast<std::size_t>(n) - 1] +
                           k[static_cast<std::size_t>(n) - 2]) /
                          (2.0 * h));
      k_dot = std::move(slopes);
    }
    p.k_dot_path_ = MatrixPath::sampled(std::move(k_dot), 1.0);
    p.fill_samples();
    return p;
  }

  int m() const { return m_; }
  int grid() const { return grid_; }
  CurvaturePreset preset() const { return preset_; }
  double time_at(int j) const { return static_cast<double>(j) / static_cast<double>(grid_); }

  Matrix k(double t) const { return k_path_(t); }
  Matrix k_dot(double t) const { return k_dot_path_(t); }
  const std::vector<Matrix>& k_samples() const { return k_samples_; }
  const std::vector<Matrix>& k_dot_samples() const { return k_dot_samples_; }
  bool second_derivative_vanishes() const { return second_derivative_vanishes_; }

 private:
  CurvaturePath(int m, int grid, CurvaturePreset preset) : m_(m), grid_(grid), preset_(preset) {
    if (m_ < 1) throw InvalidCurvatureError("CurvaturePath: dimension must be positive");
    if (grid_ < 1) throw InvalidCurvatureError("CurvaturePath: grid must be positive");
  }

  static void check_curvature_sample(const Matrix& k, int index) {
    if (k.rows() != k.cols() || k.rows() < 1)
      throw InvalidCurvatureError("CurvaturePath: curvature samples must be square");
    if (!k.allFinite())
      throw InvalidCurvatureError("CurvaturePath: sample " + std::to_string(index) +
                                  " is not finite");
    if (symmetry_defect(k) > 1e-12)
      throw InvalidCurvatureError("CurvaturePath: sample " + std::to_string(index) +
                                  " is not symmetric (defect " + num_str(symmetry_defect(k)) +
                                  ")");
  }

  void fill_samples() {
    k_samples_.resize(static_cast<std::size_t>(grid_) + 1);
    k_dot_samples_.resize(static_cast<std::size_t>(grid_) + 1);
    for (int j = 0; j <= grid_; ++j) {
      k_samples_[static_cast<std::size_t>(j)] = k_path_(time_at(j));
      k_dot_samples_[static_cast<std::size_t>(j)] = k_dot_path_(time_at(j));
    }
  }

  int m_;
  int grid_;
  CurvaturePreset preset_;
  MatrixPath k_path_;
  MatrixPath k_dot_path_;
  std::vector<Matrix> k_samples_;
  std::vector<Matrix> k_dot_samples_;
  bool second_derivative_vanishes_ = false;
};

/// E(ij) with entries delta_ik delta_jl + delta_il delta_jk; the diagonal
/// matrices E(ii) carry a 2, which is what the conformal-factor Hessian
/// weighting produces.
inline Matrix symmetric_pair(int m, int i, int j) {
  if (i < 0 || j < 0 || i >= m || j >= m)
    throw DimensionError("symmetric_pair: index out of range");
  Matrix e = Matrix::Zero(m, m);
  e(i, j) += 1.0;
  e(j, i) += 1.0;
  return e;
}

/// Channel matrices [[0, 0], [E(ij), 0]] in (i <= j) lexicographic order;
/// this order also fixes the control CSV column order u_1_1, u_1_2, ...
inline std::vector<Matrix> hessian_channels(int m) {
  std::vector<Matrix> b;
  b.reserve(static_cast<std::size_t>(m * (m + 1) / 2));
  for (int i = 0; i < m; ++i)
    for (int j = i; j < m; ++j) {
      Matrix bm = Matrix::Zero(2 * m, 2 * m);
      bm.bottomLeftCorner(m, m) = symmetric_pair(m, i, j);
      b.push_back(std::move(bm));
    }
  return b;
}

/// The Jacobi equation as a bilinear control system on the unit interval:
/// drift [[0, I], [-K(t), 0]], one channel per Hessian coefficient u_ij.
inline BilinearSystem jacobi_system(const CurvaturePath& path) {
  const int m = path.m();
  const auto block = [m](const Matrix& lower) {
    Matrix a = Matrix::Zero(2 * m, 2 * m);
    a.bottomLeftCorner(m, m) = lower;
    return a;
  };
  MatrixPath a([path, m](double t) {
    Matrix a_t = Matrix::Zero(2 * m, 2 * m);
    a_t.topRightCorner(m, m) = Matrix::Identity(m, m);
    a_t.bottomLeftCorner(m, m) = -path.k(t);
    return a_t;
  });
  MatrixPath a_dot([path, block](double t) { return block(-path.k_dot(t)); });
  std::vector<MatrixPath> higher;
  if (path.second_derivative_vanishes())
    higher.push_back(MatrixPath::constant(Matrix::Zero(2 * m, 2 * m)));
  return BilinearSystem(m, 1.0, std::move(a), std::move(a_dot), hessian_channels(m),
                        std::move(higher));
}

/// Transition matrix of the Jacobi flow from the identity over [0, 1]; with
/// u = 0 this is the unperturbed linearized return map along the geodesic.
inline SymplecticMatrix linearized_poincare(const CurvaturePath& path, const ControlSignal& u,
                                            int steps = defaults::grid_points) {
  const BilinearSystem sys = jacobi_system(path);
  const SymplecticMatrix x0(Matrix::Identity(2 * path.m(), 2 * path.m()));
  return SymplecticMatrix(propagate(sys, x0, u, steps).endpoint(), defaults::tol_traj);
}

inline SymplecticMatrix linearized_poincare(const CurvaturePath& path,
                                            int steps = defaults::grid_points) {
  const int k = path.m() * (path.m() + 1) / 2;
  return linearized_poincare(path, ControlSignal::zero(k, 1.0, steps), steps);
}

/// Outcome of the distinct-eigenvalue scan over a time region.
struct ContrerasReport {
  double best_time = std::numeric_limits<double>::quiet_NaN();
  Vector eigenvalues;    // at best_time, sorted ascending
  double min_gap = 0.0;  // +inf when m == 1 (nothing to separate)
  bool pass = false;

  /// False when the region contained no grid time to evaluate.
  bool evaluated() const { return !std::isnan(best_time); }
};

/// Scans the grid times inside `region` for the time with the best-separated
/// curvature spectrum. One-dimensional paths pass unconditionally.
inline ContrerasReport contreras_check(const CurvaturePath& path, const Support& region,
                                       double gap_tol = defaults::gap_tol) {
  ContrerasReport report;
  report.min_gap = path.m() == 1 ? std::numeric_limits<double>::infinity() : 0.0;
  report.pass = path.m() == 1;
  double best = -1.0;
  for (int j = 0; j <= path.grid(); ++j) {
    const double t = path.time_at(j);
    if (!region.contains(t)) continue;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(path.k_samples()[static_cast<std::size_t>(j)]);
    const Vector ev = eig.eigenvalues();
    double gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i + 1 < ev.size(); ++i) gap = std::min(gap, ev(i + 1) - ev(i));
    if (gap > best) {
      best = gap;
      report.best_time = t;
      report.eigenvalues = ev;
      if (path.m() > 1) report.min_gap = gap;
    }
  }
  if (path.m() > 1) report.pass = report.evaluated() && report.min_gap > gap_tol;
  return report;
}

inline ContrerasReport contreras_check(const CurvaturePath& path, Interval window,
                                       double gap_tol = defaults::gap_tol) {
  return contreras_check(path, Support{window}, gap_tol);
}

/// The support window (1 - tau + delta, 1 - delta) on the normalized clock:
/// tau is the clearance before the endpoint, delta trims both edges.
inline Interval perturbation_window(double tau, double delta) {
  if (!(tau > 0.0 && tau <= 1.0))
    throw DimensionError("perturbation_window: tau must lie in (0, 1]");
  if (!(delta >= 0.0 && 2.0 * delta < tau))
    throw DimensionError("perturbation_window: delta must satisfy 0 <= 2*delta < tau");
  return Interval{1.0 - tau + delta, 1.0 - delta};
}

/// A synthesized curvature perturbation: Hessian coefficients u_ij(t) that
/// steer the linearized return map to the target while vanishing outside the
/// window and on every avoided interval.
struct PerturbationPlan {
  Interval window{};
  std::vector<Notch> avoided;
  ControlSignal u;
  SymplecticMatrix target;
  SymplecticMatrix achieved;
  double residual = 0.0;
  int iterations = 0;
  std::array<double, 5> norms{};
  bool radius_warning = false;
  ContrerasReport contreras;
};

struct SynthesisOptions {
  int steps = defaults::grid_points;
  double tol_steer = defaults::tol_steer;
  int max_newton = defaults::max_newton_iters;
  double gap_tol = defaults::gap_tol;
  double edge_fraction = 0.1;
};

namespace detail {

struct JacobiProblem {
  BilinearSystem sys;
  SymplecticMatrix x0;
  Trajectory base;
};

inline JacobiProblem jacobi_problem(const CurvaturePath& path, int steps) {
  BilinearSystem sys = jacobi_system(path);
  SymplecticMatrix x0(Matrix::Identity(2 * path.m(), 2 * path.m()));
  PropagateOptions popts;
  popts.with_fundamental = true;
  Trajectory base = propagate(sys, x0, ControlSignal::zero(sys.k(), 1.0, steps), steps, popts);
  return JacobiProblem{std::move(sys), std::move(x0), std::move(base)};
}

inline std::vector<Notch> to_notches(const std::vector<std::pair<double, double>>& avoided) {
  std::vector<Notch> notches;
  notches.reserve(avoided.size());
  for (const auto& [center, rho] : avoided) notches.push_back(Notch{center, rho});
  return notches;
}

}  // namespace detail

/// Builds the Jacobi system, certifies the spectral gap on the effective
/// support, restricts the control family to the window minus the avoided
/// intervals, and steers to the target. Rank loss caused by the avoided
/// intervals surfaces as avoidance-infeasible rather than basis-degenerate.
inline PerturbationPlan synthesize(const CurvaturePath& path, const SymplecticMatrix& target,
                                   double tau, double delta,
                                   const std::vector<std::pair<double, double>>& avoided = {},
                                   const SynthesisOptions& opts = {}) {
  const Interval window = perturbation_window(tau, delta);
  const std::vector<Notch> notches = detail::to_notches(avoided);
  const Support region = BumpWindow(window, notches, opts.edge_fraction).support();

  const ContrerasReport report = contreras_check(path, region, opts.gap_tol);
  if (!report.evaluated() && !avoided.empty())
    throw AvoidanceInfeasibleError(
        "synthesize: avoided intervals leave no grid time inside the window");
  if (!report.evaluated())
    throw DimensionError("synthesize: window contains no grid time");
  if (!report.pass)
    throw ContrerasFailError("synthesize: curvature spectrum gap " + num_str(report.min_gap) +
                                 " at best time " + num_str(report.best_time) +
                                 " is below the required separation",
                             report.min_gap);

  detail::JacobiProblem prob = detail::jacobi_problem(path, opts.steps);
  BasisOptions bopts;
  bopts.notches = notches;
  bopts.edge_fraction = opts.edge_fraction;
  ControlBasis basis = [&] {
    try {
      return build_basis(prob.sys, prob.x0, window, prob.base, bopts);
    } catch (const BasisDegenerateError& e) {
      if (!avoided.empty())
        throw AvoidanceInfeasibleError(std::string("synthesize: avoided intervals break the "
                                                   "control family (") +
                                       e.what() + ")");
      throw;
    }
  }();

  SteeringSolution sol =
      newton_steer(prob.sys, prob.x0, basis, target, opts.tol_steer, opts.max_newton);
  return PerturbationPlan{window,
                          notches,
                          std::move(sol.control),
                          target,
                          std::move(sol.achieved),
                          sol.residual,
                          sol.iterations,
                          sol.norms,
                          sol.radius_warning,
                          report};
}

/// Largest avoided-interval half-width (to bisection resolution) at which the
/// windowed control family keeps full rank around the given centers. Returns
/// 0 when even the smallest probed half-width breaks the family.
inline double avoidance_halfwidth_limit(const CurvaturePath& path, double tau, double delta,
                                        const std::vector<double>& centers, double rho_hi,
                                        int bisection_steps = 20,
                                        const SynthesisOptions& opts = {}) {
  if (centers.empty()) throw DimensionError("avoidance_halfwidth_limit: need at least one center");
  if (!(rho_hi > 0.0)) throw DimensionError("avoidance_halfwidth_limit: rho_hi must be positive");
  const Interval window = perturbation_window(tau, delta);
  detail::JacobiProblem prob = detail::jacobi_problem(path, opts.steps);

  const auto feasible = [&](double rho) {
    BasisOptions bopts;
    bopts.edge_fraction = opts.edge_fraction;
    bopts.estimate_radius = false;
    for (double c : centers) bopts.notches.push_back(Notch{c, rho});
    try {
      build_basis(prob.sys, prob.x0, window, prob.base, bopts);
      return true;
    } catch (const BasisDegenerateError&) {
      return false;
    }
  };

  double lo = 0.0, hi = rho_hi;  // lo: largest known-feasible width (none yet)
  if (feasible(hi)) return hi;
  for (int it = 0; it < bisection_steps; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (feasible(mid))
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

/// One steering attempt of the radius sweep.
struct FranksSample {
  double radius = 0.0;
  int sample = 0;
  bool solved = false;
  double norm_c0 = 0.0;
  double norm_c2 = 0.0;
  double ratio = 0.0;  // norm_c2 / radius
};

/// Aggregate of the sweep: the empirical first-order content of the linear
/// radius inclusion (slope 1 in log-log, stable norm-to-distance ratio).
struct FranksSweep {
  std::vector<FranksSample> rows;  // ordered by (radius index, sample index)
  std::vector<double> radii;
  int samples_per_radius = 0;
  std::uint64_t seed = 0;
  double k_est = 0.0;    // 1 / worst solved ratio
  double slope = std::numeric_limits<double>::quiet_NaN();
  double r_est = 0.0;    // largest radius with this and all smaller radii fully solved
};

inline int resolve_thread_count(int requested, std::size_t tasks) {
  int threads = requested;
  if (threads <= 0) {
    if (const char* env = std::getenv("SYMPSTEER_THREADS")) {
      const long v = std::strtol(env, nullptr, 10);
      if (v > 0) threads = static_cast<int>(v);
    }
  }
  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  if (threads <= 0) threads = 1;
  return static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(threads),
                                                std::max<std::size_t>(tasks, 1)));
}

/// Samples random tangent directions at the unperturbed return map, steers to
/// reproject(S + r*delta) for each radius, and tabulates norm-to-distance
/// ratios. Work is distributed over (radius, sample) pairs; every pair is
/// seeded independently and written to its own row, so the table is identical
/// for any worker count.
inline FranksSweep estimate_franks_constant(const CurvaturePath& path, double tau, double delta,
                                            const std::vector<double>& radii, int samples,
                                            std::uint64_t seed,
                                            const SynthesisOptions& opts = {}, int threads = 0) {
  if (radii.empty()) throw DimensionError("estimate_franks_constant: need at least one radius");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0))
      throw DimensionError("estimate_franks_constant: radii must be positive");
    if (i > 0 && !(radii[i] > radii[i - 1]))
      throw DimensionError("estimate_franks_constant: radii must be strictly ascending");
  }
  if (samples < 1) throw DimensionError("estimate_franks_constant: need at least one sample");

  const Interval window = perturbation_window(tau, delta);
  detail::JacobiProblem prob = detail::jacobi_problem(path, opts.steps);
  const ContrerasReport report = contreras_check(path, Support{window}, opts.gap_tol);
  if (!report.pass)
    throw ContrerasFailError("estimate_franks_constant: curvature spectrum gap " +
                                 num_str(report.min_gap) + " is below the required separation",
                             report.min_gap);
  BasisOptions bopts;
  bopts.edge_fraction = opts.edge_fraction;
  const ControlBasis basis = build_basis(prob.sys, prob.x0, window, prob.base, bopts);
  const std::vector<Matrix> tangents = tangent_basis(prob.base.endpoint());

  FranksSweep sweep;
  sweep.radii = radii;
  sweep.samples_per_radius = samples;
  sweep.seed = seed;
  sweep.rows.resize(radii.size() * static_cast<std::size_t>(samples));

  const auto run_task = [&](std::size_t task) {
    const std::size_t ri = task / static_cast<std::size_t>(samples);
    const int si = static_cast<int>(task % static_cast<std::size_t>(samples));
    const double r = radii[ri];
    FranksSample row;
    row.radius = r;
    row.sample = si;
    try {
      Rng rng(mix_seed(seed, ri, static_cast<std::uint64_t>(si)));
      Matrix delta_dir = Matrix::Zero(prob.base.endpoint().rows(), prob.base.endpoint().cols());
      for (const Matrix& y : tangents) delta_dir += rng.normal() * y;
      delta_dir /= delta_dir.norm();
      // Project the target an order below the steering tolerance: leftover
      // defect in the target is an irreducible residual floor.
      const SymplecticMatrix target = reproject(prob.base.endpoint() + r * delta_dir, 1e-12);
      const SteeringSolution sol =
          newton_steer(prob.sys, prob.x0, basis, target, opts.tol_steer, opts.max_newton);
      row.solved = true;
      row.norm_c0 = norm_certificate(sol, 0);
      row.norm_c2 = norm_certificate(sol, 2);
      row.ratio = row.norm_c2 / r;
    } catch (const Error&) {
      row.solved = false;
    }
    sweep.rows[task] = row;
  };

  const std::size_t tasks = sweep.rows.size();
  const int workers = resolve_thread_count(threads, tasks);
  if (workers <= 1) {
    for (std::size_t task = 0; task < tasks; ++task) run_task(task);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t task = next.fetch_add(1); task < tasks; task = next.fetch_add(1))
          run_task(task);
      });
    for (std::thread& t : pool) t.join();
  }

  // Aggregates: worst solved ratio, log-log slope of the per-radius worst
  // norm, and the largest radius below which every sample solved.
  double worst_ratio = 0.0;
  std::vector<double> log_r, log_norm;
  bool prefix_solved = true;
  for (std::size_t ri = 0; ri < radii.size(); ++ri) {
    double radius_worst = 0.0;
    bool all_solved = true;
    for (int si = 0; si < samples; ++si) {
      const FranksSample& row = sweep.rows[ri * static_cast<std::size_t>(samples) +
                                           static_cast<std::size_t>(si)];
      if (!row.solved) {
        all_solved = false;
        continue;
      }
      worst_ratio = std::max(worst_ratio, row.ratio);
      radius_worst = std::max(radius_worst, row.norm_c2);
    }
    if (radius_worst > 0.0) {
      log_r.push_back(std::log(radii[ri]));
      log_norm.push_back(std::log(radius_worst));
    }
    prefix_solved = prefix_solved && all_solved;
    if (prefix_solved) sweep.r_est = radii[ri];
  }
  if (worst_ratio > 0.0) sweep.k_est = 1.0 / worst_ratio;
  if (log_r.size() >= 2) {
    double mr = 0.0, mn = 0.0;
    for (std::size_t i = 0; i < log_r.size(); ++i) {
      mr += log_r[i];
      mn += log_norm[i];
    }
    mr /= static_cast<double>(log_r.size());
    mn /= static_cast<double>(log_r.size());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < log_r.size(); ++i) {
      num += (log_r[i] - mr) * (log_norm[i] - mn);
      den += (log_r[i] - mr) * (log_r[i] - mr);
    }
    if (den > 0.0) sweep.slope = num / den;
  }
  return sweep;
}

}  // namespace sympsteer
