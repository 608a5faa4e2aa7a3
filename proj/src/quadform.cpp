#include "ewmm/quadform.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "ewmm/decay.hpp"
#include "ewmm/errors.hpp"

namespace ewmm {

QuadraticForm QuadraticForm::zero(Index dim) { return {SymMatrix(dim), Vector::Zero(dim), 0.0}; }

double QuadraticForm::evaluate(const Vector& theta) const {
  if (theta.size() != dim()) throw std::invalid_argument("QuadraticForm::evaluate dimension mismatch");
  return 0.5 * theta.dot(P * theta) + p.dot(theta) + pi;
}

Vector QuadraticForm::gradient(const Vector& theta) const {
  if (theta.size() != dim()) throw std::invalid_argument("QuadraticForm::gradient dimension mismatch");
  return P * theta + p;
}

QuadraticForm& QuadraticForm::operator+=(const QuadraticForm& o) {
  if (o.dim() != dim()) throw std::invalid_argument("QuadraticForm dimension mismatch");
  P += o.P;
  p += o.p;
  pi += o.pi;
  return *this;
}

QuadraticForm& QuadraticForm::operator*=(double s) {
  P *= s;
  p *= s;
  pi *= s;
  return *this;
}

std::vector<double> QuadraticForm::to_record() const {
  const Index m = dim();
  std::vector<double> rec;
  rec.reserve(static_cast<std::size_t>(1 + m * (m + 1) / 2 + m + 1));
  rec.push_back(static_cast<double>(m));
  for (Index i = 0; i < m; ++i)
    for (Index j = i; j < m; ++j) rec.push_back(P(i, j));
  for (Index i = 0; i < m; ++i) rec.push_back(p(i));
  rec.push_back(pi);
  return rec;
}

QuadraticForm QuadraticForm::from_record(std::span<const double> rec, std::size_t* consumed) {
  if (rec.empty()) throw std::invalid_argument("empty quadratic form record");
  const double md = rec[0];
  if (!(md >= 0.0) || md != std::floor(md)) throw std::invalid_argument("bad quadratic form dimension");
  const auto m = static_cast<Index>(md);
  const auto need = static_cast<std::size_t>(1 + m * (m + 1) / 2 + m + 1);
  if (rec.size() < need) throw std::invalid_argument("truncated quadratic form record");
  QuadraticForm q = zero(m);
  std::size_t k = 1;
  for (Index i = 0; i < m; ++i)
    for (Index j = i; j < m; ++j) q.P.set(i, j, rec[k++]);
  for (Index i = 0; i < m; ++i) q.p(i) = rec[k++];
  q.pi = rec[k++];
  if (consumed) *consumed = k;
  return q;
}

QuadraticForm quadratic_about(const Vector& center, double value, const Vector& grad,
                              const SymMatrix& hess) {
  const Vector hc = hess * center;
  return {hess, grad - hc, value - grad.dot(center) + 0.5 * center.dot(hc)};
}

QuadraticForm qf_decay_add(const QuadraticForm& state, const QuadraticForm& incoming,
                           std::int64_t t, double beta) {
  if (state.dim() != incoming.dim()) {
    throw std::invalid_argument("qf_decay_add dimension mismatch: " + std::to_string(state.dim()) +
                                " vs " + std::to_string(incoming.dim()));
  }
  const double keep = step_ratio(t, beta);
  const double add = alpha(t + 1, beta);
  QuadraticForm out = keep * state;
  out += add * incoming;
  return out;
}

SymMatrix psd_project(const SymMatrix& a) {
  if (!a.all_finite()) throw std::invalid_argument("psd_project of non-finite matrix");
  const auto eig = sym_eigendecomposition(a);
  const Vector clipped = eig.values.cwiseMax(0.0);
  return SymMatrix::from_dense(eig.vectors * clipped.asDiagonal() * eig.vectors.transpose());
}

Index quadratic_coefficient_count(Index dim) { return dim * (dim + 1) / 2 + dim + 1; }

QuadraticFit fit_quadratic(std::span<const EvalPoint> points, Index dim) {
  const Index ncoef = quadratic_coefficient_count(dim);
  const auto npts = static_cast<Index>(points.size());
  if (dim < 1) throw std::invalid_argument("fit_quadratic needs dim >= 1");
  if (npts < ncoef) {
    throw std::invalid_argument("fit_quadratic needs at least " + std::to_string(ncoef) +
                                " points for dim " + std::to_string(dim) + ", got " +
                                std::to_string(npts));
  }

  // Probes cluster around the previous estimate; center and scale each
  // coordinate before forming monomials.
  Vector center = Vector::Zero(dim);
  for (const auto& pt : points) {
    if (pt.u.size() != dim) throw std::invalid_argument("fit_quadratic point dimension mismatch");
    if (!pt.u.allFinite() || !std::isfinite(pt.v)) {
      throw std::invalid_argument("fit_quadratic received a non-finite point");
    }
    center += pt.u;
  }
  center /= static_cast<double>(npts);
  Vector scale = Vector::Zero(dim);
  for (const auto& pt : points) scale += (pt.u - center).cwiseAbs2();
  scale = (scale / static_cast<double>(npts)).cwiseSqrt();
  if (!(scale.minCoeff() > 0.0)) {
    throw RankDeficient("probe points have zero spread along some coordinate; draw more spread-out points");
  }

  Matrix design(npts, ncoef);
  Vector rhs(npts);
  for (Index r = 0; r < npts; ++r) {
    const Vector d = (points[r].u - center).cwiseQuotient(scale);
    Index c = 0;
    design(r, c++) = 1.0;
    for (Index i = 0; i < dim; ++i) design(r, c++) = d(i);
    for (Index i = 0; i < dim; ++i)
      for (Index j = i; j < dim; ++j) design(r, c++) = d(i) * d(j);
    rhs(r) = points[r].v;
  }

  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  qr.setThreshold(1e-10);
  if (qr.rank() < ncoef) {
    throw RankDeficient("quadratic fit is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                        std::to_string(ncoef) + "); use more or better-spread probe points");
  }
  const Vector coef = qr.solve(rhs);
  const double residual_rms = (design * coef - rhs).norm() / std::sqrt(static_cast<double>(npts));

  // Coefficients in scaled, centered coordinates d = S^{-1}(theta - c).
  const double c0 = coef(0);
  const Vector b = coef.segment(1, dim);
  SymMatrix a(dim);
  Index k = 1 + dim;
  for (Index i = 0; i < dim; ++i)
    for (Index j = i; j < dim; ++j) a.set(i, j, (i == j ? 2.0 : 1.0) * coef(k++));

  // Back to theta - c coordinates, then convexify.
  const Vector inv_scale = scale.cwiseInverse();
  const Matrix pc = inv_scale.asDiagonal() * a.dense() * inv_scale.asDiagonal();
  const SymMatrix P = psd_project(SymMatrix::from_dense(pc));
  const Vector g = b.cwiseProduct(inv_scale);

  return {quadratic_about(center, c0, g, P), residual_rms};
}

}  // namespace ewmm
