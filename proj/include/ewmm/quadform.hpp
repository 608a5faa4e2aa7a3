#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ewmm/linalg.hpp"

namespace ewmm {

/// f(theta) = (1/2) theta^T P theta + p^T theta + pi.
struct QuadraticForm {
  SymMatrix P;
  Vector p;
  double pi = 0.0;

  static QuadraticForm zero(Index dim);

  Index dim() const { return p.size(); }
  double evaluate(const Vector& theta) const;
  Vector gradient(const Vector& theta) const;

  QuadraticForm& operator+=(const QuadraticForm& o);
  QuadraticForm& operator*=(double s);
  friend QuadraticForm operator+(QuadraticForm a, const QuadraticForm& b) { return a += b; }
  friend QuadraticForm operator*(double s, QuadraticForm a) { return a *= s; }

  /// Flat record: dim, P upper triangle row-major, p, pi.
  std::vector<double> to_record() const;
  /// Inverse of to_record. `consumed` receives the record length when non-null.
  static QuadraticForm from_record(std::span<const double> rec, std::size_t* consumed = nullptr);
};

/// Second-order expansion f(c) + g^T (theta - c) + (1/2)(theta - c)^T H (theta - c)
/// rewritten as a QuadraticForm.
QuadraticForm quadratic_about(const Vector& center, double value, const Vector& grad,
                              const SymMatrix& hess);

/// step_ratio(t) * state + alpha_{t+1} * incoming, componentwise on (P, p, pi).
/// `state` is the time-t form; the result is the time-(t+1) form.
QuadraticForm qf_decay_add(const QuadraticForm& state, const QuadraticForm& incoming,
                           std::int64_t t, double beta);

/// Frobenius-nearest PSD matrix: clip negative eigenvalues to zero.
SymMatrix psd_project(const SymMatrix& a);

struct EvalPoint {
  Vector u;
  double v;
};

struct QuadraticFit {
  QuadraticForm form;     ///< convexified fit (quadratic part PSD-projected)
  double residual_rms;    ///< RMS least-squares residual before projection
};

/// Coefficients in a quadratic of dimension m: m(m+1)/2 + m + 1.
Index quadratic_coefficient_count(Index dim);

/// Least-squares quadratic through the points over monomials
/// {1, theta_i, theta_i theta_j (i <= j)}, followed by PSD projection.
/// Throws std::invalid_argument when there are too few points and
/// RankDeficient when the point cloud does not determine the fit.
QuadraticFit fit_quadratic(std::span<const EvalPoint> points, Index dim);

}  // namespace ewmm
