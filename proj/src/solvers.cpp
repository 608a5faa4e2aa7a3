#include "ewmm/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>

#include "ewmm/errors.hpp"

namespace ewmm {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof(double)) == 0; }

bool same_bits(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) return false;
  return a.size() == 0 ||
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

bool same_bits(const QuadraticForm& a, const QuadraticForm& b) {
  if (a.dim() != b.dim() || !same_bits(a.p, b.p) || !same_bits(a.pi, b.pi)) return false;
  const Matrix& pa = a.P.dense();
  const Matrix& pb = b.P.dense();
  return std::memcmp(pa.data(), pb.data(), sizeof(double) * static_cast<std::size_t>(pa.size())) == 0;
}

void check_spec(const SolveSpec& spec) {
  if (!spec.model) throw std::invalid_argument("solve spec has no model");
  if (!(spec.tolerance > 0.0)) throw std::invalid_argument("solver tolerance must be positive");
  if (spec.max_iters < 1) throw std::invalid_argument("solver max_iters must be positive");
  for (const auto& t : spec.terms) {
    if (!(t.weight > 0.0)) throw std::invalid_argument("loss term weights must be positive");
  }
  if (spec.surrogate && spec.surrogate->dim() != spec.model->param_dim()) {
    throw std::invalid_argument("surrogate dimension does not match the model");
  }
}

bool feasible(const SolveSpec& spec, const Vector& theta) {
  if (!spec.model->in_domain(theta) || !spec.reg.in_domain(theta)) return false;
  if (spec.shared_weight != 0.0) {
    const SmoothTerm* sh = spec.model->shared_term();
    if (sh && !sh->in_domain(theta)) return false;
  }
  return true;
}

// Loss part (everything except the regularizer).
double smooth_value(const SolveSpec& spec, const Vector& theta) {
  double f = 0.0;
  for (const auto& t : spec.terms) f += t.weight * spec.model->value(t.sample, theta);
  if (spec.surrogate) f += spec.surrogate->evaluate(theta);
  if (spec.shared_weight != 0.0) {
    if (const SmoothTerm* sh = spec.model->shared_term()) f += spec.shared_weight * sh->value(theta);
  }
  return f;
}

Vector smooth_gradient(const SolveSpec& spec, const Vector& theta) {
  Vector g = Vector::Zero(theta.size());
  for (const auto& t : spec.terms) g += t.weight * spec.model->gradient(t.sample, theta);
  if (spec.surrogate) g += spec.surrogate->gradient(theta);
  if (spec.shared_weight != 0.0) {
    if (const SmoothTerm* sh = spec.model->shared_term()) g += spec.shared_weight * sh->gradient(theta);
  }
  return g;
}

Matrix smooth_hessian(const SolveSpec& spec, const Vector& theta) {
  const Index m = theta.size();
  Matrix h = Matrix::Zero(m, m);
  for (const auto& t : spec.terms) h += t.weight * spec.model->hessian(t.sample, theta);
  if (spec.surrogate) h += spec.surrogate->P.dense();
  if (spec.shared_weight != 0.0) {
    if (const SmoothTerm* sh = spec.model->shared_term()) h += spec.shared_weight * sh->hessian(theta);
  }
  return h;
}

Vector starting_point(const SolveSpec& spec) {
  if (spec.warm_start && spec.warm_start->size() == spec.model->param_dim()) {
    if (feasible(spec, *spec.warm_start)) return *spec.warm_start;
  }
  Vector th = spec.model->initial_theta();
  if (spec.reg.kind() == Regularizer::Kind::zero_sum || spec.reg.kind() == Regularizer::Kind::nonneg) {
    th = spec.reg.prox(th, 1.0);
  }
  return th;
}

}  // namespace

bool identical_inputs(const SolveSpec& a, const SolveSpec& b) {
  if (a.model != b.model || a.terms.size() != b.terms.size()) return false;
  for (std::size_t i = 0; i < a.terms.size(); ++i) {
    const auto& ta = a.terms[i];
    const auto& tb = b.terms[i];
    if (!same_bits(ta.weight, tb.weight) || !same_bits(ta.sample.y, tb.sample.y) ||
        !same_bits(ta.sample.x, tb.sample.x)) {
      return false;
    }
  }
  if (a.surrogate.has_value() != b.surrogate.has_value()) return false;
  if (a.surrogate && !same_bits(*a.surrogate, *b.surrogate)) return false;
  if (a.warm_start.has_value() != b.warm_start.has_value()) return false;
  if (a.warm_start && !same_bits(*a.warm_start, *b.warm_start)) return false;
  return same_bits(a.shared_weight, b.shared_weight) && a.reg.kind() == b.reg.kind() &&
         same_bits(a.reg.lambda(), b.reg.lambda()) && same_bits(a.tolerance, b.tolerance) &&
         a.max_iters == b.max_iters;
}

std::string_view to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::max_iters: return "max_iters";
    case SolveStatus::infeasible_domain: return "infeasible-domain";
  }
  return "?";
}

double objective_value(const SolveSpec& spec, const Vector& theta) {
  if (!feasible(spec, theta)) return kInf;
  return smooth_value(spec, theta) + spec.reg.value(theta);
}

SolveResult solve_smooth(const SolveSpec& spec) {
  check_spec(spec);
  const auto caps = spec.model->capabilities();
  if (!spec.terms.empty() && !(caps.has_gradient && caps.has_hessian)) {
    throw std::invalid_argument(std::string(spec.model->id()) + " lacks the derivatives Newton needs");
  }
  const bool zero_sum = spec.reg.kind() == Regularizer::Kind::zero_sum;
  if (!spec.reg.smooth() && !zero_sum) {
    throw std::invalid_argument("solve_smooth needs a smooth regularizer, got " + std::string(spec.reg.name()));
  }

  SolveResult res;
  Vector theta = starting_point(spec);
  if (!feasible(spec, theta)) {
    res.theta = theta;
    res.objective_value = kInf;
    res.status = SolveStatus::infeasible_domain;
    return res;
  }
  const Index m = theta.size();
  const Matrix ones = Matrix::Constant(m, m, 1.0 / static_cast<double>(m));
  const Matrix proj = Matrix::Identity(m, m) - ones;

  auto reg_grad = [&](const Vector& th) {
    return zero_sum ? Vector(Vector::Zero(m)) : spec.reg.gradient(th);
  };
  auto reg_hess = [&](const Vector& th) {
    return zero_sum ? Matrix(Matrix::Zero(m, m)) : spec.reg.hessian(th);
  };

  double f = objective_value(spec, theta);
  for (int it = 0;; ++it) {
    Vector g = smooth_gradient(spec, theta) + reg_grad(theta);
    Matrix h = smooth_hessian(spec, theta) + reg_hess(theta);
    if (zero_sum) {
      g = proj * g;
      h = proj * h * proj + ones;
    }
    if (!g.allFinite() || !h.allFinite() || !std::isfinite(f)) {
      throw NumericalFailure("non-finite objective, gradient or Hessian in Newton solve");
    }
    res.certificate = g.norm();
    res.iterations = it;
    if (res.certificate <= spec.tolerance * (1.0 + std::abs(f))) {
      res.status = SolveStatus::optimal;
      break;
    }
    if (it >= spec.max_iters) {
      res.status = SolveStatus::max_iters;
      break;
    }

    Vector step;
    {
      const SymMatrix hs = SymMatrix::from_dense(h);
      try {
        step = -cholesky_solve(hs, g);
      } catch (const NotPositiveDefinite&) {
        const double load = 1e-8 * std::max(1.0, std::abs(hs.trace()) / static_cast<double>(m));
        try {
          step = -cholesky_solve(hs + load * SymMatrix::identity(m), g);
        } catch (const NotPositiveDefinite&) {
          throw NumericalFailure("Newton Hessian is not positive definite after diagonal loading");
        }
      }
    }

    const double slope = g.dot(step);
    double s = 1.0;
    bool accepted = false;
    Vector next;
    double fnext = kInf;
    if (-slope <= 1e-13 * (1.0 + std::abs(f))) {
      // Predicted decrease is below the resolution of f: Armijo cannot see it,
      // but we are deep in the quadratic region, so take the full step.
      next = theta + step;
      if (zero_sum) next.array() -= next.mean();
      fnext = objective_value(spec, next);
      accepted = std::isfinite(fnext) && fnext <= f + 1e-12 * (1.0 + std::abs(f));
    } else {
      for (int ls = 0; ls < 60; ++ls, s *= 0.5) {
        next = theta + s * step;
        if (zero_sum) next.array() -= next.mean();
        fnext = objective_value(spec, next);
        if (std::isfinite(fnext) && fnext <= f + 1e-4 * s * slope) {
          accepted = true;
          break;
        }
      }
    }
    if (!accepted || next == theta) {
      // No decrease representable in floating point; stop at the current point.
      res.status = res.certificate <= 1e3 * spec.tolerance * (1.0 + std::abs(f)) ? SolveStatus::optimal
                                                                                  : SolveStatus::max_iters;
      break;
    }
    theta = std::move(next);
    f = fnext;
  }
  res.theta = theta;
  res.objective_value = f;
  return res;
}

SolveResult solve_prox(const SolveSpec& spec) {
  check_spec(spec);
  if (!spec.reg.has_prox()) {
    throw std::invalid_argument("solve_prox needs a regularizer with a prox, got " + std::string(spec.reg.name()));
  }
  if (!spec.terms.empty() && !spec.model->capabilities().has_gradient) {
    throw std::invalid_argument(std::string(spec.model->id()) + " has no gradient");
  }

  const auto total = [&](const Vector& th) { return smooth_value(spec, th) + spec.reg.value(th); };

  SolveResult res;
  Vector x = starting_point(spec);
  if (!spec.reg.in_domain(x)) x = spec.reg.prox(x, 1.0);
  if (!spec.model->in_domain(x)) {
    res.theta = x;
    res.objective_value = kInf;
    res.status = SolveStatus::infeasible_domain;
    return res;
  }

  double step = 1.0;
  if (spec.model->capabilities().has_hessian || spec.terms.empty()) {
    const double lip = smooth_hessian(spec, x).norm();
    if (lip > 0.0 && std::isfinite(lip)) step = 1.0 / lip;
  }

  Vector y = x;
  double tk = 1.0;
  double fx = total(x);
  for (int it = 1;; ++it) {
    const Vector gy = smooth_gradient(spec, y);
    const double fy = smooth_value(spec, y);
    if (!gy.allFinite() || !std::isfinite(fy)) throw NumericalFailure("non-finite objective in proximal gradient");

    step *= 1.2;
    Vector z;
    for (int ls = 0;; ++ls) {
      z = spec.reg.prox(y - step * gy, step);
      const Vector d = z - y;
      const double fz = smooth_value(spec, z);
      if (std::isfinite(fz) && fz <= fy + gy.dot(d) + d.squaredNorm() / (2.0 * step) + 1e-15 * std::abs(fy)) break;
      step *= 0.5;
      if (ls > 100) throw NumericalFailure("proximal gradient backtracking failed");
    }

    const double fz_total = total(z);
    const double tnext = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    if (fz_total > fx) {
      // Adaptive restart: drop momentum.
      y = z;
      tk = 1.0;
    } else {
      y = z + ((tk - 1.0) / tnext) * (z - x);
      tk = tnext;
    }
    x = std::move(z);
    fx = fz_total;

    const Vector gx = smooth_gradient(spec, x);
    res.certificate = (x - spec.reg.prox(x - step * gx, step)).norm() / step;
    res.iterations = it;
    if (res.certificate <= spec.tolerance) {
      res.status = SolveStatus::optimal;
      break;
    }
    if (it >= spec.max_iters) {
      res.status = SolveStatus::max_iters;
      break;
    }
  }
  res.theta = x;
  res.objective_value = fx;
  return res;
}

SolveResult solve_scalar_plq(std::span<const WeightedValue> terms, const QuadraticForm& quad, double eta) {
  if (quad.dim() != 1) throw std::invalid_argument("solve_scalar_plq needs a scalar quadratic");
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("quantile level must lie in [0,1]");
  const double a = quad.P(0, 0);
  const double b = quad.p(0);
  if (!(a >= 0.0)) throw std::invalid_argument("solve_scalar_plq needs nonnegative curvature");

  std::vector<WeightedValue> sorted(terms.begin(), terms.end());
  double total = 0.0;
  for (const auto& t : sorted) {
    if (!(t.weight > 0.0) || !std::isfinite(t.x)) throw std::invalid_argument("bad pinball term");
    total += t.weight;
  }
  std::sort(sorted.begin(), sorted.end(), [](const auto& l, const auto& r) { return l.x < r.x; });

  // Derivative on an open interval where weight `below` sits left of theta:
  // (1 - eta) below - eta (total - below) + a theta + b.
  const auto slope_const = [&](double below) { return (1.0 - eta) * below - eta * (total - below) + b; };

  SolveResult res;
  res.status = SolveStatus::optimal;
  double theta = 0.0;
  bool found = false;
  double below = 0.0;
  std::size_t i = 0;
  int scanned = 0;
  while (i < sorted.size()) {
    const double v = sorted[i].x;
    double at = 0.0;
    std::size_t j = i;
    while (j < sorted.size() && sorted[j].x == v) at += sorted[j++].weight;
    ++scanned;
    const double left = slope_const(below) + a * v;
    const double right = slope_const(below + at) + a * v;
    if (left > 0.0) {
      // Sign change strictly inside the previous interval; a > 0 there.
      if (!(a > 0.0)) throw std::invalid_argument("pinball objective is unbounded below");
      theta = -slope_const(below) / a;
      found = true;
      break;
    }
    if (right >= 0.0) {
      theta = v;
      found = true;
      break;
    }
    below += at;
    i = j;
  }
  if (!found) {
    if (!(a > 0.0)) throw std::invalid_argument("pinball objective is unbounded below");
    theta = -slope_const(total) / a;
  }

  double f = 0.5 * a * theta * theta + b * theta + quad.pi;
  for (const auto& t : sorted) f += t.weight * pinball(theta - t.x, eta);
  res.theta = Vector::Constant(1, theta);
  res.objective_value = f;
  res.iterations = scanned;
  res.certificate = 0.0;
  return res;
}

double graphical_lasso_objective(const SymMatrix& s_emp, const SymMatrix& theta, double lambda) {
  double ld;
  try {
    ld = logdet_pd(theta);
  } catch (const NotPositiveDefinite&) {
    return kInf;
  }
  const Matrix& t = theta.dense();
  const double off = t.cwiseAbs().sum() - t.diagonal().cwiseAbs().sum();
  return (s_emp.dense().cwiseProduct(t)).sum() - ld + lambda * off;
}

int offdiag_nonzeros(const SymMatrix& theta, double threshold) {
  int count = 0;
  for (Index i = 0; i < theta.dim(); ++i)
    for (Index j = i + 1; j < theta.dim(); ++j)
      if (std::abs(theta(i, j)) > threshold) ++count;
  return count;
}

GlassoResult graphical_lasso(const SymMatrix& s_in, double lambda, const GlassoOptions& opts) {
  const Index n = s_in.dim();
  if (n < 1) throw std::invalid_argument("graphical_lasso needs a nonempty matrix");
  if (!s_in.all_finite()) throw std::invalid_argument("graphical_lasso: non-finite covariance");
  if (!(lambda >= 0.0)) throw std::invalid_argument("graphical_lasso: lambda must be nonnegative");
  for (Index i = 0; i < n; ++i) {
    if (!(s_in(i, i) > 0.0)) {
      throw std::invalid_argument("graphical_lasso: covariance diagonal entry " + std::to_string(i) +
                                  " is not positive");
    }
  }

  GlassoResult out;
  SymMatrix s = s_in;
  if (!is_positive_definite(s)) {
    s += (1e-8 * s.trace() / static_cast<double>(n)) * SymMatrix::identity(n);
    out.loaded = true;
  }

  if (lambda == 0.0 || n == 1) {
    out.precision = inverse_pd(s);
    out.covariance = s;
    out.objective = graphical_lasso_objective(s, out.precision, lambda);
    out.duality_gap = 0.0;
    out.converged = true;
    return out;
  }

  const Matrix& sd = s.dense();
  Matrix w = sd;
  Matrix beta = Matrix::Zero(n, n);  // column j: coefficients of the other variables
  Matrix theta(n, n);

  auto soft = [](double v, double k) { return v > k ? v - k : (v < -k ? v + k : 0.0); };

  for (int it = 1; it <= opts.max_iters; ++it) {
    for (Index j = 0; j < n; ++j) {
      // Lasso: min_b (1/2) b^T W11 b - s12^T b + lambda ||b||_1 over indices k != j.
      Vector wb = Vector::Zero(n);  // W11 b, indexed in full coordinates
      for (Index k = 0; k < n; ++k) {
        if (k == j || beta(k, j) == 0.0) continue;
        for (Index l = 0; l < n; ++l)
          if (l != j) wb(l) += w(l, k) * beta(k, j);
      }
      for (int sweep = 0; sweep < 10000; ++sweep) {
        double delta = 0.0;
        for (Index k = 0; k < n; ++k) {
          if (k == j) continue;
          const double old = beta(k, j);
          const double r = sd(k, j) - (wb(k) - w(k, k) * old);
          const double nb = soft(r, lambda) / w(k, k);
          if (nb != old) {
            const double d = nb - old;
            for (Index l = 0; l < n; ++l)
              if (l != j) wb(l) += w(l, k) * d;
            beta(k, j) = nb;
            delta = std::max(delta, std::abs(d) * w(k, k));
          }
        }
        if (delta <= 1e-14 * sd.diagonal().maxCoeff()) break;
      }
      for (Index l = 0; l < n; ++l) {
        if (l == j) continue;
        w(l, j) = wb(l);
        w(j, l) = wb(l);
      }
    }

    for (Index j = 0; j < n; ++j) {
      double dot = 0.0;
      for (Index k = 0; k < n; ++k)
        if (k != j) dot += w(k, j) * beta(k, j);
      const double tjj = 1.0 / (w(j, j) - dot);
      for (Index k = 0; k < n; ++k) theta(k, j) = k == j ? tjj : -beta(k, j) * tjj;
    }
    out.precision = SymMatrix::from_dense(theta);
    out.covariance = SymMatrix::from_dense(w);
    out.iterations = it;

    const double primal = graphical_lasso_objective(s, out.precision, lambda);
    double dual = -kInf;
    {
      Matrix wc = w;
      for (Index i = 0; i < n; ++i)
        for (Index k = 0; k < n; ++k)
          if (i != k) wc(i, k) = std::clamp(wc(i, k), sd(i, k) - lambda, sd(i, k) + lambda);
      try {
        dual = logdet_pd(SymMatrix::from_dense(wc)) + static_cast<double>(n);
      } catch (const NotPositiveDefinite&) {
      }
    }
    out.objective = primal;
    out.duality_gap = primal - dual;
    if (std::isfinite(out.duality_gap) && out.duality_gap <= opts.tolerance) {
      out.converged = true;
      break;
    }
  }
  return out;
}

SolveResult solve(const SolveSpec& spec) {
  check_spec(spec);
  const LossModel& model = *spec.model;

  if (spec.reg.on_precision_matrix()) {
    // Linear loss Tr(S Theta): aggregate S and hand off to the graphical lasso.
    const Index d = model.param_dim();
    Vector lin = Vector::Zero(d);
    double constant = 0.0;
    for (const auto& t : spec.terms) {
      const QuadraticForm q = model.decompose(t.sample);
      if (q.P.dense().cwiseAbs().maxCoeff() != 0.0) {
        throw std::invalid_argument("precision-matrix route needs a loss linear in the parameter");
      }
      lin += t.weight * q.p;
      constant += t.weight * q.pi;
    }
    if (spec.surrogate) {
      if (spec.surrogate->P.dense().cwiseAbs().maxCoeff() > 0.0) {
        throw std::invalid_argument("precision-matrix route needs a linear surrogate");
      }
      lin += spec.surrogate->p;
      constant += spec.surrogate->pi;
    }
    const SymMatrix s_emp = smat(lin);
    const double lambda = spec.reg.kind() == Regularizer::Kind::offdiag_l1_neg_logdet ? spec.reg.lambda() : 0.0;
    const GlassoResult g = graphical_lasso(s_emp, lambda, {std::max(spec.tolerance, 1e-12), spec.max_iters});
    SolveResult res;
    res.theta = svec(g.precision);
    res.objective_value = g.objective + constant;
    res.iterations = g.iterations;
    res.status = g.converged ? SolveStatus::optimal : SolveStatus::max_iters;
    res.certificate = g.duality_gap;
    return res;
  }

  if (auto eta = model.pinball_level(); eta && model.param_dim() == 1 && spec.reg.is_quadratic()) {
    std::vector<WeightedValue> vals;
    vals.reserve(spec.terms.size());
    for (const auto& t : spec.terms) {
      model.validate(t.sample);
      vals.push_back({t.sample.x(0), t.weight});
    }
    QuadraticForm q = spec.surrogate ? *spec.surrogate : QuadraticForm::zero(1);
    q.P += SymMatrix::from_dense(spec.reg.quadratic_matrix(1));
    return solve_scalar_plq(vals, q, *eta);
  }

  const auto caps = model.capabilities();
  const bool differentiable = spec.terms.empty() || (caps.has_gradient && caps.has_hessian);
  if (differentiable && (spec.reg.smooth() || spec.reg.kind() == Regularizer::Kind::zero_sum)) {
    return solve_smooth(spec);
  }
  if ((spec.terms.empty() || caps.has_gradient) && spec.reg.has_prox()) return solve_prox(spec);
  throw std::invalid_argument("no solver for loss '" + std::string(model.id()) + "' with regularizer '" +
                              std::string(spec.reg.name()) + "'");
}

}  // namespace ewmm
