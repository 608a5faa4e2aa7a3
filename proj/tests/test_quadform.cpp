#include <doctest.h>

#include <cstring>
#include <stdexcept>

#include "ewmm/decay.hpp"
#include "ewmm/errors.hpp"
#include "ewmm/models.hpp"
#include "ewmm/quadform.hpp"
#include "oracles.hpp"

using namespace ewmm;

namespace {

QuadraticForm random_form(oracle::Gen& g, Index m) {
  return {SymMatrix::from_dense(g.spd(m)), g.vec(m), g.normal()};
}

bool bitwise_equal(const QuadraticForm& a, const QuadraticForm& b) {
  const auto ra = a.to_record();
  const auto rb = b.to_record();
  return ra.size() == rb.size() && std::memcmp(ra.data(), rb.data(), ra.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("evaluate and gradient") {
  oracle::Gen g(1);
  for (int trial = 0; trial < 50; ++trial) {
    const Index m = g.integer(1, 5);
    const QuadraticForm q = random_form(g, m);
    const Vector th = g.vec(m);
    const double direct = 0.5 * th.dot(q.P.dense() * th) + q.p.dot(th) + q.pi;
    CHECK(q.evaluate(th) == doctest::Approx(direct).epsilon(1e-13));
    auto f = [&](const Vector& x) { return q.evaluate(x); };
    CHECK(oracle::rel_err(q.gradient(th), oracle::fd_gradient(f, th)) <= 1e-6);
  }
}

TEST_CASE("quadratic_about reproduces the expansion") {
  oracle::Gen g(2);
  for (int trial = 0; trial < 50; ++trial) {
    const Index m = g.integer(1, 4);
    const Vector c = g.vec(m);
    const Vector grad = g.vec(m);
    const Matrix h = g.spd(m);
    const double v = g.normal();
    const QuadraticForm q = quadratic_about(c, v, grad, SymMatrix::from_dense(h));
    const Vector th = g.vec(m);
    const Vector d = th - c;
    CHECK(q.evaluate(th) == doctest::Approx(v + grad.dot(d) + 0.5 * d.dot(h * d)).epsilon(1e-11));
  }
}

TEST_CASE("qf_decay_add equals the directly weighted sum of forms") {
  oracle::Gen g(3);
  for (double b : {0.5, 0.9, 0.99}) {
    std::vector<QuadraticForm> incoming;
    QuadraticForm state = QuadraticForm::zero(3);
    for (long t = 1; t <= 150; ++t) {
      incoming.push_back(random_form(g, 3));
      state = t == 1 ? incoming.back() : qf_decay_add(state, incoming.back(), t - 1, b);
      const auto w = oracle::weights(t, b);
      QuadraticForm direct = QuadraticForm::zero(3);
      for (long k = 0; k < t; ++k) direct += w[static_cast<std::size_t>(k)] * incoming[static_cast<std::size_t>(k)];
      CHECK(oracle::rel_err(state.P.dense(), direct.P.dense()) <= 1e-12);
      CHECK(oracle::rel_err(state.p, direct.p) <= 1e-12);
      CHECK(state.pi == doctest::Approx(direct.pi).epsilon(1e-12));
    }
  }
}

TEST_CASE("records round-trip bit-for-bit") {
  oracle::Gen g(4);
  for (int trial = 0; trial < 20; ++trial) {
    const QuadraticForm q = random_form(g, g.integer(1, 6));
    std::size_t used = 0;
    auto rec = q.to_record();
    rec.push_back(42.0);
    const QuadraticForm back = QuadraticForm::from_record(rec, &used);
    CHECK(used == rec.size() - 1);
    CHECK(bitwise_equal(q, back));
  }
  const std::vector<double> bad = {2.0, 1.0};
  CHECK_THROWS_AS(QuadraticForm::from_record(bad), std::invalid_argument);
}

TEST_CASE("PSD projection is Frobenius-optimal against random PSD candidates") {
  oracle::Gen g(5);
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = g.integer(1, 6);
    const Matrix a = g.sym(n);
    const SymMatrix proj = psd_project(SymMatrix::from_dense(a));
    CHECK(min_eigenvalue(proj) >= -1e-12);
    const double best = oracle::frob(proj.dense(), a);
    for (int k = 0; k < 20; ++k) CHECK(best <= oracle::frob(g.psd(n), a) + 1e-12);
    // Small perturbations that stay PSD cannot do better either.
    const Matrix nudged = proj.dense() + 1e-3 * g.psd(n);
    CHECK(best <= oracle::frob(nudged, a) + 1e-12);
    // Idempotent.
    CHECK(oracle::rel_err(psd_project(proj).dense(), proj.dense()) <= 1e-12);
  }
}

TEST_CASE("fit recovers an exactly quadratic function") {
  oracle::Gen g(6);
  for (int trial = 0; trial < 50; ++trial) {
    const Index m = g.integer(1, 4);
    const QuadraticForm truth = random_form(g, m);
    const Vector center = g.vec(m, 5.0);
    std::vector<EvalPoint> pts;
    for (Index k = 0; k < 3 * quadratic_coefficient_count(m); ++k) {
      Vector u = center + 0.1 * g.vec(m);
      pts.push_back({u, truth.evaluate(u)});
    }
    const QuadraticFit fit = fit_quadratic(pts, m);
    CHECK(oracle::rel_err(fit.form.P.dense(), truth.P.dense()) <= 1e-8);
    CHECK(oracle::rel_err(fit.form.p, truth.p) <= 1e-8);
    CHECK(fit.form.pi == doctest::Approx(truth.pi).epsilon(1e-8).scale(1.0));
    CHECK(fit.residual_rms <= 1e-8);
  }
}

TEST_CASE("fit output is convex even for concave data") {
  std::vector<EvalPoint> pts;
  for (double u = -2.0; u <= 2.0; u += 0.25) pts.push_back({Vector::Constant(1, u), -u * u + u});
  const QuadraticFit fit = fit_quadratic(pts, 1);
  CHECK(fit.form.P(0, 0) >= 0.0);
  CHECK(fit.form.p(0) == doctest::Approx(1.0));
}

TEST_CASE("fit rejects degenerate designs") {
  CHECK(quadratic_coefficient_count(1) == 3);
  CHECK(quadratic_coefficient_count(3) == 10);
  std::vector<EvalPoint> few = {{Vector::Constant(1, 0.0), 0.0}, {Vector::Constant(1, 1.0), 1.0}};
  CHECK_THROWS_AS(fit_quadratic(few, 1), std::invalid_argument);
  // Points on a line in 2-D cannot determine the cross term.
  std::vector<EvalPoint> line;
  for (int k = 0; k < 12; ++k) {
    Vector u(2);
    u << k, 2.0 * k;
    line.push_back({u, static_cast<double>(k * k)});
  }
  CHECK_THROWS_AS(fit_quadratic(line, 2), RankDeficient);
  // Same point repeated.
  std::vector<EvalPoint> same(6, {Vector::Constant(1, 3.0), 1.0});
  CHECK_THROWS_AS(fit_quadratic(same, 1), RankDeficient);
}

TEST_CASE("pinball tail fits stabilize with more probes") {
  // Tail loss of a scalar pinball model over 300 samples, as in the quantile
  // experiment. The fit is biased (the tail is piecewise linear) but its
  // spread across probe draws must shrink as L grows.
  oracle::Gen g(7);
  const double b = oracle::beta_of_halflife(100.0);
  std::vector<double> xs;
  for (int k = 0; k < 300; ++k) xs.push_back(std::exp(0.15 * g.normal()));
  auto tail = [&](double u) {
    double v = 0.0;
    for (int k = 0; k < 300; ++k) v += std::pow(b, 101 + k) * (1 - b) * oracle::pinball(u - xs[k], 0.5);
    return v;
  };
  auto fitted_at_center = [&](int L, std::uint64_t seed) {
    oracle::Gen pg(seed);
    std::vector<EvalPoint> pts;
    for (int i = 0; i < L; ++i) {
      const double u = 1.0 + 0.2 * pg.normal();
      pts.push_back({Vector::Constant(1, u), tail(u)});
    }
    const QuadraticFit f = fit_quadratic(pts, 1);
    CHECK(f.form.P(0, 0) >= 0.0);
    return f.form.evaluate(Vector::Constant(1, 1.0));
  };
  auto spread = [&](int L) {
    std::vector<double> v;
    for (std::uint64_t s = 0; s < 60; ++s) v.push_back(fitted_at_center(L, s + 1000 * L));
    double mean = 0.0, var = 0.0;
    for (double x : v) mean += x / v.size();
    for (double x : v) var += (x - mean) * (x - mean) / v.size();
    return std::sqrt(var);
  };
  const double s10 = spread(10), s100 = spread(100);
  CHECK(s100 < 0.6 * s10);
}
