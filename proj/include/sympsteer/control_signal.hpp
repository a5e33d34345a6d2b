#pragma once

#include "sympsteer/core.hpp"
#include "sympsteer/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

namespace sympsteer {

/// Open interval (lo, hi).
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double t) const { return t > lo && t < hi; }
  double length() const { return hi - lo; }
};

/// Union of disjoint open intervals, sorted ascending. Empty means "nowhere".
class Support {
 public:
  Support() = default;
  explicit Support(Interval w) {
    if (w.length() > 0.0) parts_.push_back(w);
  }
  explicit Support(std::vector<Interval> parts) : parts_(std::move(parts)) { normalize(); }

  bool contains(double t) const {
    for (const Interval& w : parts_)
      if (w.contains(t)) return true;
    return false;
  }

  bool empty() const { return parts_.empty(); }
  const std::vector<Interval>& parts() const { return parts_; }

  Support clipped(double lo, double hi) const {
    std::vector<Interval> out;
    for (Interval w : parts_) {
      w.lo = std::max(w.lo, lo);
      w.hi = std::min(w.hi, hi);
      if (w.length() > 0.0) out.push_back(w);
    }
    return Support(std::move(out));
  }

  /// Removes the closed interval [core.lo, core.hi] from every part.
  Support minus(Interval core) const {
    std::vector<Interval> out;
    for (const Interval& w : parts_) {
      if (core.hi <= w.lo || core.lo >= w.hi) {
        out.push_back(w);
        continue;
      }
      if (core.lo > w.lo) out.push_back({w.lo, core.lo});
      if (core.hi < w.hi) out.push_back({core.hi, w.hi});
    }
    return Support(std::move(out));
  }

  Support unioned(const Support& o) const {
    std::vector<Interval> all = parts_;
    all.insert(all.end(), o.parts_.begin(), o.parts_.end());
    return Support(std::move(all));
  }

 private:
  void normalize() {
    std::erase_if(parts_, [](const Interval& w) { return !(w.length() > 0.0); });
    std::sort(parts_.begin(), parts_.end(),
              [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    std::vector<Interval> merged;
    for (const Interval& w : parts_) {
      if (!merged.empty() && w.lo <= merged.back().hi)
        merged.back().hi = std::max(merged.back().hi, w.hi);
      else
        merged.push_back(w);
    }
    parts_ = std::move(merged);
  }

  std::vector<Interval> parts_;
};

/// k-channel control sampled on the uniform grid t_j = j T/N, j = 0..N.
/// Samples at grid points outside the declared support are exact zeros
/// (enforced at construction). Evaluation between grid points is cubic
/// Hermite with finite-difference slopes, so the signal is C^1; evaluation
/// at a grid time returns the stored sample bitwise.
class ControlSignal {
 public:
  ControlSignal(Matrix samples, double horizon, Support support)
      : samples_(std::move(samples)), support_(support.clipped(0.0, horizon)), horizon_(horizon) {
    if (horizon_ <= 0.0) throw DimensionError("ControlSignal: horizon must be positive");
    if (samples_.rows() < 2 || samples_.cols() < 1)
      throw DimensionError("ControlSignal: need at least 2 grid rows and 1 channel");
    dt_ = horizon_ / static_cast<double>(grid());
    for (int j = 0; j <= grid(); ++j)
      if (!support_.contains(time_at(j))) samples_.row(j).setZero();
    compute_slopes();
  }

  static ControlSignal zero(int k, double horizon, int grid) {
    return ControlSignal(Matrix::Zero(grid + 1, k), horizon, Support{});
  }

  int channels() const { return static_cast<int>(samples_.cols()); }
  int grid() const { return static_cast<int>(samples_.rows()) - 1; }
  double horizon() const { return horizon_; }
  double dt() const { return dt_; }
  double time_at(int j) const { return static_cast<double>(j) * dt_; }
  const Matrix& samples() const { return samples_; }
  const Support& support() const { return support_; }

  bool same_grid(const ControlSignal& o) const {
    return grid() == o.grid() && channels() == o.channels() && horizon_ == o.horizon_;
  }

  Vector eval(double t) const {
    t = std::clamp(t, 0.0, horizon_);
    const int near = static_cast<int>(std::lround(t / dt_));
    if (near >= 0 && near <= grid() && time_at(near) == t)
      return samples_.row(near).transpose();
    int j = std::clamp(static_cast<int>(std::floor(t / dt_)), 0, grid() - 1);
    const double s = (t - time_at(j)) / dt_;
    const double s2 = s * s, s3 = s2 * s;
    const double h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s;
    const double h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
    return (h00 * samples_.row(j) + (h10 * dt_) * slopes_.row(j) + h01 * samples_.row(j + 1) +
            (h11 * dt_) * slopes_.row(j + 1))
        .transpose();
  }

  double eval(double t, int channel) const { return eval(t)(channel); }

  /// Sup-norms of forward-difference derivatives of orders 0..4 on the grid.
  std::array<double, 5> derivative_sup_norms() const {
    std::array<double, 5> norms{};
    Matrix d = samples_;
    for (int order = 0; order <= 4; ++order) {
      norms[order] = d.rows() > 0 ? max_abs(d) : 0.0;
      if (d.rows() <= 1) {
        for (int o = order + 1; o <= 4; ++o) norms[o] = 0.0;
        break;
      }
      d = Matrix((d.bottomRows(d.rows() - 1) - d.topRows(d.rows() - 1)) / dt_);
    }
    return norms;
  }

  ControlSignal scaled(double c) const {
    return ControlSignal(Matrix(samples_ * c), horizon_, support_);
  }

 private:
  void compute_slopes() {
    const int n = grid();
    slopes_.resize(n + 1, channels());
    if (n == 1) {
      slopes_.row(0) = (samples_.row(1) - samples_.row(0)) / dt_;
      slopes_.row(1) = slopes_.row(0);
      return;
    }
    slopes_.row(0) =
        (-3.0 * samples_.row(0) + 4.0 * samples_.row(1) - samples_.row(2)) / (2.0 * dt_);
    for (int j = 1; j < n; ++j)
      slopes_.row(j) = (samples_.row(j + 1) - samples_.row(j - 1)) / (2.0 * dt_);
    slopes_.row(n) =
        (3.0 * samples_.row(n) - 4.0 * samples_.row(n - 1) + samples_.row(n - 2)) / (2.0 * dt_);
  }

  Matrix samples_;
  Matrix slopes_;
  Support support_;
  double horizon_;
  double dt_;
};

/// base + sum_a coeff[a] * dirs[a]; all signals must share the grid.
/// The result's declared support is the union of all inputs' supports.
inline ControlSignal linear_combination(const ControlSignal& base, const Vector& coeff,
                                        const std::vector<ControlSignal>& dirs) {
  if (static_cast<int>(dirs.size()) != coeff.size())
    throw DimensionError("linear_combination: coefficient count does not match directions");
  Matrix samples = base.samples();
  Support support = base.support();
  for (int a = 0; a < coeff.size(); ++a) {
    if (!base.same_grid(dirs[a]))
      throw GridError("linear_combination: direction " + std::to_string(a) +
                      " is not on the base grid");
    samples += coeff(a) * dirs[a].samples();
    support = support.unioned(dirs[a].support());
  }
  return ControlSignal(std::move(samples), base.horizon(), support);
}

}  // namespace sympsteer
