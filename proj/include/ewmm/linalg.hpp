#pragma once

#include "ewmm/types.hpp"

namespace ewmm {

/// Dense symmetric matrix. Every mutation writes both (i,j) and (j,i), so the
/// stored matrix is exactly symmetric.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(Index dim) : a_(Matrix::Zero(dim, dim)) {}

  static SymMatrix identity(Index dim);
  static SymMatrix diagonal(const Vector& d);
  /// Symmetric part (A + A^T) / 2 of a square matrix.
  static SymMatrix from_dense(const Matrix& a);
  /// x x^T
  static SymMatrix outer(const Vector& x);

  Index dim() const { return a_.rows(); }
  double operator()(Index i, Index j) const { return a_(i, j); }
  void set(Index i, Index j, double v) {
    a_(i, j) = v;
    a_(j, i) = v;
  }
  void add(Index i, Index j, double v);

  const Matrix& dense() const { return a_; }
  double trace() const { return a_.trace(); }
  bool all_finite() const { return a_.allFinite(); }

  Vector operator*(const Vector& x) const { return a_ * x; }
  SymMatrix& operator+=(const SymMatrix& o);
  SymMatrix& operator*=(double s) {
    a_ *= s;
    return *this;
  }
  friend SymMatrix operator+(SymMatrix a, const SymMatrix& b) { return a += b; }
  friend SymMatrix operator*(double s, SymMatrix a) { return a *= s; }

 private:
  Matrix a_;
};

/// Eigenvalues in descending order with matching orthonormal eigenvectors (columns).
struct SymEigen {
  Vector values;
  Matrix vectors;
};

/// Cyclic Jacobi eigendecomposition. Throws std::invalid_argument on non-finite input.
SymEigen sym_eigendecomposition(const SymMatrix& a);

/// Solves A x = b for positive definite A. Throws NotPositiveDefinite.
Vector cholesky_solve(const SymMatrix& a, const Vector& b);

/// log det A from the Cholesky diagonal. Throws NotPositiveDefinite.
double logdet_pd(const SymMatrix& a);

/// Inverse of a positive definite matrix. Throws NotPositiveDefinite.
SymMatrix inverse_pd(const SymMatrix& a);

/// Cholesky feasibility test.
bool is_positive_definite(const SymMatrix& a);

/// Smallest eigenvalue (Jacobi).
double min_eigenvalue(const SymMatrix& a);

}  // namespace ewmm
