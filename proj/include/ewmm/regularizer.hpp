#pragma once

#include <memory>
#include <string_view>

#include "ewmm/linalg.hpp"

namespace ewmm {

/// Convex regularizer r(theta), possibly an indicator (value +inf off-domain).
class Regularizer {
 public:
  enum class Kind {
    none,
    sum_squares,             // lambda ||theta||^2
    l1,                      // lambda ||theta||_1
    nonneg,                  // indicator of theta >= 0
    neg_logdet,              // -log det smat(theta)
    offdiag_l1_neg_logdet,   // -log det Theta + lambda sum_{i != j} |Theta_ij|
    laplacian,               // theta^T (lambda L(W)) theta
    zero_sum,                // indicator of sum(theta) = 0
  };

  static Regularizer none();
  static Regularizer sum_squares(double lambda);
  static Regularizer l1(double lambda);
  static Regularizer nonneg();
  static Regularizer neg_logdet();
  static Regularizer sparse_precision(double lambda);
  /// W: symmetric nonnegative edge weights.
  static Regularizer laplacian(double lambda, const SymMatrix& weights);
  static Regularizer zero_sum();

  Kind kind() const { return kind_; }
  std::string_view name() const;
  double lambda() const { return lambda_; }
  bool smooth() const;
  bool has_prox() const;
  /// True for the two log-determinant kinds (parameter is svec of a matrix).
  bool on_precision_matrix() const;

  /// +inf outside the domain.
  double value(const Vector& theta) const;
  Vector gradient(const Vector& theta) const;
  Matrix hessian(const Vector& theta) const;
  /// argmin_z r(z) + ||z - v||^2 / (2 step).
  Vector prox(const Vector& v, double step) const;
  bool in_domain(const Vector& theta) const;
  /// Quadratic matrix of a quadratic regularizer (sum_squares, laplacian):
  /// r(theta) = (1/2) theta^T Q theta.
  Matrix quadratic_matrix(Index dim) const;
  bool is_quadratic() const;

 private:
  Regularizer(Kind k, double lambda) : kind_(k), lambda_(lambda) {}

  Kind kind_;
  double lambda_;
  std::shared_ptr<const Matrix> laplacian_;  // lambda * L(W)
};

}  // namespace ewmm
