#pragma once

#include "sympsteer/core.hpp"
#include "sympsteer/errors.hpp"
#include "sympsteer/rng.hpp"

#include <utility>
#include <vector>

namespace sympsteer {

inline void check_even_square(const Matrix& x, const char* what) {
  if (x.rows() != x.cols() || x.rows() % 2 != 0 || x.rows() == 0)
    throw DimensionError(std::string(what) + ": expected square matrix of even size, got " +
                         std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
}

/// max |X^T J X - J|; zero exactly on the symplectic group.
inline double symplectic_defect(const Matrix& x) {
  check_even_square(x, "symplectic_defect");
  const int m = static_cast<int>(x.rows()) / 2;
  const Matrix j = symplectic_form(m);
  return max_abs(x.transpose() * j * x - j);
}

/// Inverse via the group identity X^{-1} = -J X^T J. Exact on the group,
/// O(defect) error off it; callers needing accuracy away from the group
/// should solve directly.
inline Matrix symplectic_inverse(const Matrix& x) {
  check_even_square(x, "symplectic_inverse");
  const int m = static_cast<int>(x.rows()) / 2;
  const Matrix j = symplectic_form(m);
  return -j * x.transpose() * j;
}

/// A 2m x 2m matrix certified to lie within `tol` of the symplectic group.
class SymplecticMatrix {
 public:
  explicit SymplecticMatrix(Matrix x, double tol = defaults::tol_symp) : value_(std::move(x)) {
    check_even_square(value_, "SymplecticMatrix");
    defect_ = symplectic_defect(value_);
    if (defect_ > tol)
      throw NotSymplecticError("SymplecticMatrix: defect " + num_str(defect_) +
                                   " exceeds tolerance " + num_str(tol),
                               defect_);
  }

  int m() const { return static_cast<int>(value_.rows()) / 2; }
  const Matrix& value() const { return value_; }
  double defect() const { return defect_; }

 private:
  Matrix value_;
  double defect_;
};

/// A tangent direction Y at base point X: X^T J Y must be symmetric.
class TangentVector {
 public:
  TangentVector(Matrix base, Matrix value, double tol = defaults::tol_symp)
      : base_(std::move(base)), value_(std::move(value)) {
    check_even_square(base_, "TangentVector base");
    if (value_.rows() != base_.rows() || value_.cols() != base_.cols())
      throw DimensionError("TangentVector: base and value shapes differ");
    const int m = static_cast<int>(base_.rows()) / 2;
    sym_defect_ = symmetry_defect(base_.transpose() * symplectic_form(m) * value_);
    if (sym_defect_ > tol)
      throw NotSymplecticError("TangentVector: symmetry defect " + num_str(sym_defect_) +
                                   " exceeds tolerance " + num_str(tol),
                               sym_defect_);
  }

  const Matrix& base() const { return base_; }
  const Matrix& value() const { return value_; }
  double sym_defect() const { return sym_defect_; }

 private:
  Matrix base_;
  Matrix value_;
  double sym_defect_;
};

/// Canonical basis of n x n symmetric matrices: E_aa for a = 0..n-1, then
/// E_ab + E_ba for a < b in lexicographic order. Size n(n+1)/2.
inline std::vector<Matrix> symmetric_basis(int n) {
  std::vector<Matrix> basis;
  basis.reserve(static_cast<std::size_t>(n) * (n + 1) / 2);
  for (int a = 0; a < n; ++a) {
    Matrix e = Matrix::Zero(n, n);
    e(a, a) = 1.0;
    basis.push_back(std::move(e));
  }
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      Matrix e = Matrix::Zero(n, n);
      e(a, b) = 1.0;
      e(b, a) = 1.0;
      basis.push_back(std::move(e));
    }
  return basis;
}

/// Basis of the tangent space at X, one Y_a per canonical symmetric S_a,
/// chosen so that X^T J Y_a = S_a. Size m(2m+1).
inline std::vector<Matrix> tangent_basis(const Matrix& x) {
  check_even_square(x, "tangent_basis");
  const int n = static_cast<int>(x.rows());
  const Matrix jt = symplectic_form(n / 2).transpose();  // J^T = -J = J^{-1}
  std::vector<Matrix> basis;
  basis.reserve(static_cast<std::size_t>(n) * (n + 1) / 2);
  for (const Matrix& s : symmetric_basis(n)) basis.push_back(x * jt * s);
  return basis;
}

/// Pull X back onto the symplectic group by the first-order correction
/// X <- X (I + J e / 2), e = X^T J X - J. e is antisymmetric, the update
/// cancels it to first order, so the defect decays quadratically near the
/// group. Throws ProjectionFailureError if `tol` is not reached.
inline SymplecticMatrix reproject(const Matrix& x, double tol = defaults::tol_symp,
                                  int max_iters = defaults::max_reproject_iters) {
  check_even_square(x, "reproject");
  const int n = static_cast<int>(x.rows());
  const Matrix j = symplectic_form(n / 2);
  const Matrix id = Matrix::Identity(n, n);
  Matrix cur = x;
  double defect = max_abs(cur.transpose() * j * cur - j);
  for (int it = 0; it < max_iters && defect > tol; ++it) {
    const Matrix e = cur.transpose() * j * cur - j;
    cur = cur * (id + 0.5 * j * e);
    defect = max_abs(cur.transpose() * j * cur - j);
  }
  if (defect > tol)
    throw ProjectionFailureError(
        "reproject: defect " + num_str(defect) + " after " +
            std::to_string(max_iters) + " iterations (tolerance " + num_str(tol) + ")",
        defect);
  return SymplecticMatrix(cur, tol);
}

/// Random element of the group: product of symmetric shears and a
/// block-diagonal GL factor (each factor exactly symplectic), polished by
/// one reprojection so the result meets tol_symp.
inline SymplecticMatrix random_symplectic(Rng& rng, int m, double scale = 0.5) {
  const int n = 2 * m;
  Matrix a = rng.normal_matrix(m, m) * scale;
  a = Matrix(0.5 * (a + a.transpose()));
  Matrix b = rng.normal_matrix(m, m) * scale;
  b = Matrix(0.5 * (b + b.transpose()));
  Matrix g = Matrix::Identity(m, m) + rng.normal_matrix(m, m) * (scale / (1.0 + std::sqrt(m)));

  Matrix upper = Matrix::Identity(n, n);
  upper.topRightCorner(m, m) = a;
  Matrix lower = Matrix::Identity(n, n);
  lower.bottomLeftCorner(m, m) = b;
  Matrix block = Matrix::Zero(n, n);
  block.topLeftCorner(m, m) = g;
  block.bottomRightCorner(m, m) = g.inverse().transpose();

  return reproject(upper * lower * block);
}

}  // namespace sympsteer
