#include <doctest.h>

#include <memory>
#include <stdexcept>

#include "ewmm/catalog.hpp"
#include "ewmm/errors.hpp"
#include "ewmm/models.hpp"
#include "ewmm/regularizer.hpp"
#include "model_cases.hpp"
#include "oracles.hpp"

using namespace ewmm;

using cases::smooth_cases;

TEST_CASE("gradients match finite differences") {
  oracle::Gen g(101);
  for (const auto& c : smooth_cases()) {
    CAPTURE(c.model->id());
    for (int trial = 0; trial < 100; ++trial) {
      const Sample s = c.sample(g);
      const Vector th = c.theta(g);
      auto f = [&](const Vector& x) { return c.model->value(s, x); };
      const Vector fd = oracle::fd_gradient(f, th);
      CHECK(oracle::rel_err(c.model->gradient(s, th), fd) <= 1e-5);
    }
  }
}

TEST_CASE("Hessians match finite differences of the gradient") {
  oracle::Gen g(102);
  for (const auto& c : smooth_cases()) {
    CAPTURE(c.model->id());
    for (int trial = 0; trial < 100; ++trial) {
      const Sample s = c.sample(g);
      const Vector th = c.theta(g);
      auto gr = [&](const Vector& x) { return Vector(c.model->gradient(s, x)); };
      CHECK(oracle::rel_err(c.model->hessian(s, th), oracle::fd_hessian(gr, th)) <= 1e-4);
    }
  }
}

TEST_CASE("quadratic decompositions reproduce the loss") {
  oracle::Gen g(103);
  for (const auto& c : smooth_cases()) {
    if (!c.model->capabilities().has_quadratic_decomposition) continue;
    CAPTURE(c.model->id());
    for (int trial = 0; trial < 100; ++trial) {
      const Sample s = c.sample(g);
      const Vector th = c.theta(g);
      const QuadraticForm q = c.model->decompose(s);
      double v = q.evaluate(th);
      if (const SmoothTerm* sh = c.model->shared_term()) v += sh->value(th);
      const double ref = c.model->value(s, th);
      CHECK(std::abs(v - ref) <= 1e-10 * std::max(1.0, std::abs(ref)));
    }
  }
}

TEST_CASE("models without a decomposition say so") {
  HuberLoss h(2, 1.0);
  CHECK_FALSE(h.capabilities().has_quadratic_decomposition);
  CHECK_THROWS_AS(h.decompose(Sample::point(Vector::Zero(2))), std::logic_error);
  PinballLoss p(0.3);
  CHECK_THROWS_AS(p.gradient(Sample::scalar(1.0), Vector::Zero(1)), std::logic_error);
}

TEST_CASE("scalar helpers") {
  CHECK(huber(0.5, 1.0) == 0.25);
  CHECK(huber(-3.0, 1.0) == 5.0);
  CHECK(huber_deriv(3.0, 1.0) == 2.0);
  CHECK(huber_second(3.0, 1.0) == 0.0);
  CHECK(pinball(2.0, 0.25) == 1.5);
  CHECK(pinball(-2.0, 0.25) == 0.5);
  CHECK(softplus(800.0) == 800.0);
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(softplus(0.0) == doctest::Approx(std::log(2.0)));
  Vector v(3);
  v << 1000.0, 1000.0, 1000.0;
  CHECK(logsumexp(v) == doctest::Approx(1000.0 + std::log(3.0)));
  CHECK(softmax(v).sum() == doctest::Approx(1.0));
}

TEST_CASE("logistic loss is overflow-safe") {
  LogisticLoss l(2);
  Vector z(2);
  z << 300.0, -300.0;
  Vector th(2);
  th << 5.0, -5.0;
  CHECK(l.value(Sample::labeled(z, 1.0), th) == doctest::Approx(0.0));
  CHECK(l.value(Sample::labeled(z, -1.0), th) == doctest::Approx(3000.0));
  CHECK(l.gradient(Sample::labeled(z, -1.0), th).allFinite());
  CHECK(l.hessian(Sample::labeled(z, 1.0), th).allFinite());
}

TEST_CASE("svec is an isometry for the trace inner product") {
  oracle::Gen g(104);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = g.integer(1, 6);
    const SymMatrix a = SymMatrix::from_dense(g.sym(n));
    const SymMatrix b = SymMatrix::from_dense(g.sym(n));
    CHECK(svec(a).dot(svec(b)) == doctest::Approx((a.dense() * b.dense()).trace()).epsilon(1e-12));
    CHECK(oracle::rel_err(smat(svec(a)).dense(), a.dense()) <= 1e-15);
    CHECK(svec_dim(n) == n * (n + 1) / 2);
    CHECK(smat_dim(svec_dim(n)) == n);
  }
  CHECK_THROWS_AS(smat_dim(4), std::invalid_argument);
}

TEST_CASE("gauss-cov domain is the PD cone") {
  GaussCovLoss l(2);
  CHECK(l.in_domain(svec(SymMatrix::identity(2))));
  CHECK_FALSE(l.in_domain(svec(-1.0 * SymMatrix::identity(2))));
  CHECK(l.initial_theta() == svec(SymMatrix::identity(2)));
}

TEST_CASE("samples are validated") {
  SquareLoss sq(2);
  CHECK_THROWS_AS(sq.validate(Sample::point(Vector::Zero(3))), std::invalid_argument);
  CHECK_THROWS_AS(sq.validate(Sample::point(Vector::Constant(2, std::nan("")))), std::invalid_argument);
  LogisticLoss lg(2);
  CHECK_THROWS_AS(lg.validate(Sample::labeled(Vector::Zero(2), 0.5)), std::invalid_argument);
  PmfLoss pmf(3);
  CHECK_THROWS_AS(pmf.validate(Sample::category(0)), std::invalid_argument);
  CHECK_THROWS_AS(pmf.validate(Sample::category(4)), std::invalid_argument);
  CHECK_THROWS_AS(PinballLoss(1.5), std::invalid_argument);
  CHECK_THROWS_AS(HuberLoss(2, 0.0), std::invalid_argument);
}

TEST_CASE("catalog addresses every model id") {
  for (const auto& id : model_ids()) {
    CAPTURE(id);
    const ModelSpec m = make_model(id, {3, 0.5, 1.0, 0.5});
    CHECK(m.loss);
  }
  CHECK(make_model("ridge", {2, 0.3}).reg.kind() == Regularizer::Kind::sum_squares);
  CHECK(make_model("sparse-precision", {3, 0.3}).reg.kind() == Regularizer::Kind::offdiag_l1_neg_logdet);
  CHECK(make_model("pmf", {3, 0.0}).reg.kind() == Regularizer::Kind::zero_sum);
  CHECK(make_model("gauss-cov", {4}).loss->param_dim() == 10);
  CHECK_THROWS_AS(make_model("svm", {}), ConfigError);
}

TEST_CASE("regularizer gradients and Hessians") {
  oracle::Gen g(105);
  Matrix w = Matrix::Zero(4, 4);
  w(0, 1) = w(1, 0) = 1.0;
  w(1, 2) = w(2, 1) = 2.0;
  w(2, 3) = w(3, 2) = 0.5;
  const std::vector<std::pair<Regularizer, Index>> regs = {
      {Regularizer::sum_squares(0.7), 4},
      {Regularizer::laplacian(0.3, SymMatrix::from_dense(w)), 4},
      {Regularizer::neg_logdet(), 6},
  };
  for (const auto& [r, m] : regs) {
    CAPTURE(r.name());
    for (int trial = 0; trial < 100; ++trial) {
      const Vector th = m == 6 ? svec(SymMatrix::from_dense(g.spd(3))) : Vector(g.vec(m));
      auto f = [&](const Vector& x) { return r.value(x); };
      auto gr = [&](const Vector& x) { return Vector(r.gradient(x)); };
      CHECK(oracle::rel_err(r.gradient(th), oracle::fd_gradient(f, th)) <= 1e-5);
      CHECK(oracle::rel_err(r.hessian(th), oracle::fd_hessian(gr, th)) <= 1e-4);
    }
  }
  // Laplacian penalty is sum of w_ij (theta_i - theta_j)^2.
  const Regularizer lap = Regularizer::laplacian(1.0, SymMatrix::from_dense(w));
  Vector th(4);
  th << 1, 2, 4, 8;
  CHECK(lap.value(th) == doctest::Approx(1 * 1 + 2 * 4 + 0.5 * 16));
}

TEST_CASE("prox operators minimize r(z) + |z - v|^2 / (2 step)") {
  oracle::Gen g(106);
  const std::vector<Regularizer> regs = {Regularizer::none(), Regularizer::sum_squares(0.8), Regularizer::l1(0.6),
                                         Regularizer::nonneg(), Regularizer::zero_sum()};
  for (const auto& r : regs) {
    CAPTURE(r.name());
    for (int trial = 0; trial < 100; ++trial) {
      const Vector v = g.vec(5, 2.0);
      const double step = g.uniform(0.05, 3.0);
      const Vector z = r.prox(v, step);
      auto obj = [&](const Vector& y) { return r.value(y) + (y - v).squaredNorm() / (2.0 * step); };
      const double fz = obj(z);
      CHECK(std::isfinite(fz));
      for (int k = 0; k < 20; ++k) {
        Vector y = z + 0.1 * g.vec(5);
        if (r.kind() == Regularizer::Kind::nonneg) y = y.cwiseMax(0.0);
        if (r.kind() == Regularizer::Kind::zero_sum) y.array() -= y.mean();
        CHECK(fz <= obj(y) + 1e-8);
      }
    }
  }
  CHECK_THROWS(Regularizer::neg_logdet().prox(Vector::Ones(3), 1.0));
}

TEST_CASE("indicator regularizers are infinite off their domain") {
  CHECK(std::isinf(Regularizer::nonneg().value(-Vector::Ones(2))));
  CHECK(std::isinf(Regularizer::zero_sum().value(Vector::Ones(2))));
  CHECK(std::isinf(Regularizer::neg_logdet().value(svec(-1.0 * SymMatrix::identity(2)))));
  CHECK_THROWS_AS(Regularizer::l1(-1.0), std::invalid_argument);
}
