#pragma once

#include "sympsteer/bilinear.hpp"
#include "sympsteer/core.hpp"
#include "sympsteer/errors.hpp"
#include "sympsteer/symplectic.hpp"

#include <map>
#include <utility>
#include <vector>

namespace sympsteer {

namespace detail {

// The bracket sequence is maintained symbolically in time: each table entry
// is a sum of words, a word being a product of symbols where -1 stands for
// the (constant) channel matrix and d >= 0 for d^d A/dt^d. This keeps time
// differentiation exact; matrices enter only at the final evaluation.
using Word = std::vector<int>;
using Expr = std::map<Word, double>;

inline void add_term(Expr& e, Word w, double c) {
  auto [it, fresh] = e.try_emplace(std::move(w), 0.0);
  it->second += c;
  if (it->second == 0.0) e.erase(it);
}

/// next = d/dt(prev) + prev*A - A*prev.
inline Expr bracket_step(const Expr& prev) {
  Expr out;
  for (const auto& [w, c] : prev) {
    for (std::size_t q = 0; q < w.size(); ++q) {
      if (w[q] < 0) continue;  // the channel matrix is constant in time
      Word dw = w;
      ++dw[q];
      add_term(out, std::move(dw), c);
    }
    Word right = w;
    right.push_back(0);
    add_term(out, std::move(right), c);
    Word left;
    left.reserve(w.size() + 1);
    left.push_back(0);
    left.insert(left.end(), w.begin(), w.end());
    add_term(out, std::move(left), -c);
  }
  return out;
}

inline int max_derivative_order(const Expr& e) {
  int order = 0;
  for (const auto& [w, c] : e)
    for (int s : w)
      if (s > order) order = s;
  return order;
}

inline Matrix eval_expr(const Expr& e, const Matrix& channel,
                        const std::vector<Matrix>& a_derivs, int n) {
  Matrix out = Matrix::Zero(n, n);
  for (const auto& [w, c] : e) {
    Matrix prod = Matrix::Identity(n, n);
    for (int s : w) prod = prod * (s < 0 ? channel : a_derivs[static_cast<std::size_t>(s)]);
    out += c * prod;
  }
  return out;
}

}  // namespace detail

/// Iterated bracket values B_i^j(t) for every channel i and order j <= depth,
/// from the recursion B^j = dB^{j-1}/dt + B^{j-1} A - A B^{j-1} with
/// B^0 = B_i. Every entry lies in the tangent space at the identity
/// (J * entry symmetric); B_i^0 equals B_i bitwise.
class BracketTable {
 public:
  BracketTable(double time, int m, std::vector<std::vector<Matrix>> entries)
      : time_(time), m_(m), entries_(std::move(entries)) {
    const Matrix j = symplectic_form(m_);
    for (const auto& channel : entries_)
      for (const Matrix& e : channel) {
        const double defect = symmetry_defect(j * e);
        if (defect > defaults::tol_symp)
          throw NotSymplecticError("BracketTable: entry leaves the tangent space", defect);
      }
  }

  double time() const { return time_; }
  int m() const { return m_; }
  int channels() const { return static_cast<int>(entries_.size()); }
  int depth() const { return entries_.empty() ? -1 : static_cast<int>(entries_[0].size()) - 1; }
  const Matrix& entry(int channel, int order) const {
    return entries_[static_cast<std::size_t>(channel)][static_cast<std::size_t>(order)];
  }

  std::vector<Matrix> flattened() const {
    std::vector<Matrix> all;
    for (const auto& channel : entries_)
      for (const Matrix& e : channel) all.push_back(e);
    return all;
  }

 private:
  double time_;
  int m_;
  std::vector<std::vector<Matrix>> entries_;
};

/// Numerical span decision for a bracket table: achieved rank of the
/// vectorized entries versus the full tangent dimension m(2m+1).
struct RankReport {
  int required = 0;
  int achieved = 0;
  Vector singular_values;  // descending
  double best_time = 0.0;
  bool controllable = false;

  /// Smallest singular value that counted toward the achieved rank.
  double smallest_retained() const {
    return achieved > 0 ? singular_values(achieved - 1) : 0.0;
  }
};

/// Builds the bracket table at time t. Derivative orders of A up to depth-1
/// are needed; orders beyond the analytic data fall back to centered
/// differences, limited by fd_allowance (so depth 3 works with A and A_dot
/// only, depth 4 is refused).
inline BracketTable bracket_table(const BilinearSystem& sys, double time, int depth,
                                  int fd_allowance = 1) {
  if (time < 0.0 || time > sys.horizon())
    throw DimensionError("bracket_table: time outside [0, T]");
  if (depth < 0) throw DimensionError("bracket_table: depth must be nonnegative");

  std::vector<detail::Expr> exprs;
  exprs.reserve(static_cast<std::size_t>(depth) + 1);
  exprs.push_back({{detail::Word{-1}, 1.0}});
  for (int j = 1; j <= depth; ++j) exprs.push_back(detail::bracket_step(exprs.back()));

  int max_order = 0;
  for (const auto& e : exprs) max_order = std::max(max_order, detail::max_derivative_order(e));
  std::vector<Matrix> a_derivs;
  a_derivs.reserve(static_cast<std::size_t>(max_order) + 1);
  for (int d = 0; d <= max_order; ++d) a_derivs.push_back(sys.a_deriv(d, time, fd_allowance));

  const int n = 2 * sys.m();
  std::vector<std::vector<Matrix>> entries(static_cast<std::size_t>(sys.k()));
  for (int i = 0; i < sys.k(); ++i) {
    entries[static_cast<std::size_t>(i)].reserve(static_cast<std::size_t>(depth) + 1);
    for (const auto& e : exprs)
      entries[static_cast<std::size_t>(i)].push_back(
          detail::eval_expr(e, sys.b()[static_cast<std::size_t>(i)], a_derivs, n));
  }
  return BracketTable(time, sys.m(), std::move(entries));
}

/// Vectorizes all table entries, ranks them by SVD with a relative cutoff.
inline RankReport span_rank(const BracketTable& table, double tol_rank = defaults::tol_rank) {
  const std::vector<Matrix> mats = table.flattened();
  if (mats.empty()) throw DegenerateInputError("span_rank: empty bracket table");
  Matrix stacked(mats[0].size(), static_cast<int>(mats.size()));
  for (std::size_t c = 0; c < mats.size(); ++c)
    stacked.col(static_cast<int>(c)) = vectorize(mats[c]);
  if (max_abs(stacked) == 0.0)
    throw DegenerateInputError("span_rank: all bracket entries are zero");

  Eigen::JacobiSVD<Matrix> svd(stacked);
  RankReport report;
  report.required = table.m() * (2 * table.m() + 1);
  report.singular_values = svd.singularValues();
  const double top = report.singular_values(0);
  for (int i = 0; i < report.singular_values.size(); ++i)
    if (report.singular_values(i) > tol_rank * top) ++report.achieved;
  report.best_time = table.time();
  report.controllable = (report.achieved == report.required);
  return report;
}

/// Evaluates span_rank over candidate times and keeps the best report:
/// higher achieved rank wins, ties go to the larger smallest-retained
/// singular value (the better-conditioned span).
inline RankReport scan_times(const BilinearSystem& sys, const std::vector<double>& times,
                             int depth, double tol_rank = defaults::tol_rank,
                             int fd_allowance = 1) {
  if (times.empty()) throw DimensionError("scan_times: empty time list");
  bool first = true;
  RankReport best;
  for (double t : times) {
    RankReport r = span_rank(bracket_table(sys, t, depth, fd_allowance), tol_rank);
    if (first || r.achieved > best.achieved ||
        (r.achieved == best.achieved && r.smallest_retained() > best.smallest_retained())) {
      best = r;
      first = false;
    }
  }
  return best;
}

}  // namespace sympsteer
