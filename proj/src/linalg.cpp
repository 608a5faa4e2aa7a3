#include "ewmm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ewmm/errors.hpp"

namespace ewmm {

SymMatrix SymMatrix::identity(Index dim) {
  SymMatrix s(dim);
  s.a_.setIdentity();
  return s;
}

SymMatrix SymMatrix::diagonal(const Vector& d) {
  SymMatrix s(d.size());
  s.a_.diagonal() = d;
  return s;
}

SymMatrix SymMatrix::from_dense(const Matrix& a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("SymMatrix requires a square matrix");
  SymMatrix s;
  s.a_ = 0.5 * (a + a.transpose());
  return s;
}

SymMatrix SymMatrix::outer(const Vector& x) {
  SymMatrix s;
  s.a_ = x * x.transpose();
  return s;
}

void SymMatrix::add(Index i, Index j, double v) {
  if (i == j) {
    a_(i, i) += v;
  } else {
    a_(i, j) += v;
    a_(j, i) = a_(i, j);
  }
}

SymMatrix& SymMatrix::operator+=(const SymMatrix& o) {
  if (o.dim() != dim()) throw std::invalid_argument("SymMatrix dimension mismatch");
  a_ += o.a_;
  return *this;
}

SymEigen sym_eigendecomposition(const SymMatrix& sym) {
  if (!sym.all_finite()) throw std::invalid_argument("eigendecomposition of non-finite matrix");
  const Index n = sym.dim();
  Matrix a = sym.dense();
  Matrix v = Matrix::Identity(n, n);

  const double scale = std::max(a.norm(), std::numeric_limits<double>::min());
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (std::sqrt(off) <= 1e-16 * scale) break;

    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Rotation angle zeroing a(p,q); stable form from Golub & Van Loan.
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index i, Index j) { return a(i, i) > a(j, j); });

  SymEigen out{Vector(n), Matrix(n, n)};
  for (Index k = 0; k < n; ++k) {
    out.values(k) = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

namespace {

Eigen::LLT<Matrix> factor(const SymMatrix& a) {
  if (!a.all_finite()) throw std::invalid_argument("Cholesky of non-finite matrix");
  Eigen::LLT<Matrix> llt(a.dense());
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("matrix is not positive definite");
  // LLT accepts tiny or subnormal pivots; treat them as failure as well.
  const Vector d = llt.matrixL().toDenseMatrix().diagonal();
  if (!(d.minCoeff() > 0.0) || !d.allFinite()) {
    throw NotPositiveDefinite("matrix is not positive definite");
  }
  return llt;
}

}  // namespace

Vector cholesky_solve(const SymMatrix& a, const Vector& b) {
  if (b.size() != a.dim()) throw std::invalid_argument("cholesky_solve dimension mismatch");
  return factor(a).solve(b);
}

double logdet_pd(const SymMatrix& a) {
  const auto llt = factor(a);
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

SymMatrix inverse_pd(const SymMatrix& a) {
  const auto llt = factor(a);
  return SymMatrix::from_dense(llt.solve(Matrix::Identity(a.dim(), a.dim())));
}

bool is_positive_definite(const SymMatrix& a) {
  try {
    factor(a);
    return true;
  } catch (const NotPositiveDefinite&) {
    return false;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

double min_eigenvalue(const SymMatrix& a) {
  const auto eig = sym_eigendecomposition(a);
  return eig.values(eig.values.size() - 1);
}

}  // namespace ewmm
