#include "ewmm/regularizer.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "ewmm/errors.hpp"
#include "ewmm/models.hpp"

namespace ewmm {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_lambda(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("regularization weight must be finite and nonnegative");
  }
}

}  // namespace

Regularizer Regularizer::none() { return {Kind::none, 0.0}; }

Regularizer Regularizer::sum_squares(double lambda) {
  check_lambda(lambda);
  return {Kind::sum_squares, lambda};
}

Regularizer Regularizer::l1(double lambda) {
  check_lambda(lambda);
  return {Kind::l1, lambda};
}

Regularizer Regularizer::nonneg() { return {Kind::nonneg, 0.0}; }

Regularizer Regularizer::neg_logdet() { return {Kind::neg_logdet, 0.0}; }

Regularizer Regularizer::sparse_precision(double lambda) {
  check_lambda(lambda);
  return {Kind::offdiag_l1_neg_logdet, lambda};
}

Regularizer Regularizer::laplacian(double lambda, const SymMatrix& weights) {
  check_lambda(lambda);
  const Matrix& w = weights.dense();
  if ((w.array() < 0.0).any()) throw std::invalid_argument("Laplacian edge weights must be nonnegative");
  Matrix lap = -w;
  lap.diagonal().setZero();
  lap.diagonal() = -lap.rowwise().sum();
  Regularizer r{Kind::laplacian, lambda};
  r.laplacian_ = std::make_shared<const Matrix>(lambda * lap);
  return r;
}

Regularizer Regularizer::zero_sum() { return {Kind::zero_sum, 0.0}; }

std::string_view Regularizer::name() const {
  switch (kind_) {
    case Kind::none: return "none";
    case Kind::sum_squares: return "sum_squares";
    case Kind::l1: return "l1";
    case Kind::nonneg: return "nonneg";
    case Kind::neg_logdet: return "neg_logdet";
    case Kind::offdiag_l1_neg_logdet: return "offdiag_l1+neg_logdet";
    case Kind::laplacian: return "laplacian";
    case Kind::zero_sum: return "zero_sum";
  }
  return "?";
}

bool Regularizer::smooth() const {
  switch (kind_) {
    case Kind::none:
    case Kind::sum_squares:
    case Kind::neg_logdet:
    case Kind::laplacian: return true;
    default: return false;
  }
}

bool Regularizer::has_prox() const {
  switch (kind_) {
    case Kind::none:
    case Kind::sum_squares:
    case Kind::l1:
    case Kind::nonneg:
    case Kind::zero_sum: return true;
    default: return false;
  }
}

bool Regularizer::on_precision_matrix() const {
  return kind_ == Kind::neg_logdet || kind_ == Kind::offdiag_l1_neg_logdet;
}

bool Regularizer::is_quadratic() const {
  return kind_ == Kind::none || kind_ == Kind::sum_squares || kind_ == Kind::laplacian;
}

bool Regularizer::in_domain(const Vector& theta) const {
  if (!theta.allFinite()) return false;
  switch (kind_) {
    case Kind::nonneg: return (theta.array() >= 0.0).all();
    case Kind::zero_sum: {
      const double scale = 1.0 + theta.cwiseAbs().sum();
      return std::abs(theta.sum()) <= 1e-9 * scale;
    }
    case Kind::neg_logdet:
    case Kind::offdiag_l1_neg_logdet: return is_positive_definite(smat(theta));
    default: return true;
  }
}

double Regularizer::value(const Vector& theta) const {
  switch (kind_) {
    case Kind::none: return 0.0;
    case Kind::sum_squares: return lambda_ * theta.squaredNorm();
    case Kind::l1: return lambda_ * theta.lpNorm<1>();
    case Kind::nonneg:
    case Kind::zero_sum: return in_domain(theta) ? 0.0 : kInf;
    case Kind::laplacian: return theta.dot(*laplacian_ * theta);
    case Kind::neg_logdet:
    case Kind::offdiag_l1_neg_logdet: {
      const SymMatrix t = smat(theta);
      double v;
      try {
        v = -logdet_pd(t);
      } catch (const NotPositiveDefinite&) {
        return kInf;
      }
      if (kind_ == Kind::offdiag_l1_neg_logdet) {
        const Matrix& d = t.dense();
        v += lambda_ * (d.cwiseAbs().sum() - d.diagonal().cwiseAbs().sum());
      }
      return v;
    }
  }
  return 0.0;
}

Vector Regularizer::gradient(const Vector& theta) const {
  switch (kind_) {
    case Kind::none: return Vector::Zero(theta.size());
    case Kind::sum_squares: return 2.0 * lambda_ * theta;
    case Kind::laplacian: return 2.0 * (*laplacian_ * theta);
    case Kind::neg_logdet: return -svec(inverse_pd(smat(theta)));
    default: throw std::logic_error(std::string("regularizer ") + std::string(name()) + " is not smooth");
  }
}

Matrix Regularizer::hessian(const Vector& theta) const {
  const Index m = theta.size();
  switch (kind_) {
    case Kind::none: return Matrix::Zero(m, m);
    case Kind::sum_squares: return 2.0 * lambda_ * Matrix::Identity(m, m);
    case Kind::laplacian: return 2.0 * *laplacian_;
    case Kind::neg_logdet: {
      // Column b is svec(Sigma E_b Sigma) with E_b = smat(e_b), Sigma = Theta^{-1}.
      const Matrix sigma = inverse_pd(smat(theta)).dense();
      Matrix h(m, m);
      for (Index b = 0; b < m; ++b) {
        const Matrix eb = smat(Vector::Unit(m, b)).dense();
        h.col(b) = svec(SymMatrix::from_dense(sigma * eb * sigma));
      }
      return 0.5 * (h + h.transpose());
    }
    default: throw std::logic_error(std::string("regularizer ") + std::string(name()) + " is not smooth");
  }
}

Vector Regularizer::prox(const Vector& v, double step) const {
  if (!(step > 0.0)) throw std::invalid_argument("prox step must be positive");
  switch (kind_) {
    case Kind::none: return v;
    case Kind::sum_squares: return v / (1.0 + 2.0 * lambda_ * step);
    case Kind::l1: {
      const double k = lambda_ * step;
      return v.unaryExpr([k](double a) { return a > k ? a - k : (a < -k ? a + k : 0.0); });
    }
    case Kind::nonneg: return v.cwiseMax(0.0);
    case Kind::zero_sum: return (v.array() - v.mean()).matrix();
    default: throw std::logic_error(std::string("regularizer ") + std::string(name()) + " has no prox");
  }
}

Matrix Regularizer::quadratic_matrix(Index dim) const {
  switch (kind_) {
    case Kind::none: return Matrix::Zero(dim, dim);
    case Kind::sum_squares: return 2.0 * lambda_ * Matrix::Identity(dim, dim);
    case Kind::laplacian:
      if (laplacian_->rows() != dim) throw std::invalid_argument("Laplacian dimension mismatch");
      return 2.0 * *laplacian_;
    default: throw std::logic_error(std::string("regularizer ") + std::string(name()) + " is not quadratic");
  }
}

}  // namespace ewmm
