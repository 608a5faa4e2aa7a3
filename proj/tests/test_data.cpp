#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "ewmm/data.hpp"
#include "ewmm/errors.hpp"

#ifndef EWMM_TEST_DATA_DIR
#define EWMM_TEST_DATA_DIR "tests/data"
#endif

using namespace ewmm;

TEST_CASE("normal quantile function") {
  CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-13));
  CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(inverse_normal_cdf(0.15) == doctest::Approx(-1.0364333894937898).epsilon(1e-12));
  for (double p = 1e-10; p < 1.0; p = p < 0.01 ? p * 10 : p + 0.01) {
    CHECK(normal_cdf(inverse_normal_cdf(p)) == doctest::Approx(p).epsilon(1e-11));
    // 1 - p is inexact for tiny p, so symmetry is only checked where that rounding is harmless.
    if (p >= 1e-6) CHECK(inverse_normal_cdf(1 - p) == doctest::Approx(-inverse_normal_cdf(p)).epsilon(1e-9));
  }
  CHECK(inverse_normal_cdf(0.0) == -std::numeric_limits<double>::infinity());
  CHECK(inverse_normal_cdf(1.0) == std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(inverse_normal_cdf(1.5), std::invalid_argument);
  CHECK_THROWS_AS(inverse_normal_cdf(std::nan("")), std::invalid_argument);
}

TEST_CASE("quantile stream") {
  QuantileStreamSpec spec;
  const auto q = gen_quantile_stream(spec);
  REQUIRE(q.x.size() == 2000u);
  REQUIRE(q.true_quantiles.size() == 3u);
  const double pi = std::acos(-1.0);
  std::size_t negatives = 0;
  for (std::int64_t t = 1; t <= spec.T; ++t) {
    const double mu = spec.a * std::sin(2 * pi * t / spec.P1) + spec.b * std::cos(2 * pi * t / spec.P2);
    const double sg = spec.c * std::sin(2 * pi * t / spec.P3) + spec.d * std::cos(2 * pi * t / spec.P4);
    CHECK(q.mu[t - 1] == doctest::Approx(mu).epsilon(1e-14));
    CHECK(q.sigma[t - 1] == doctest::Approx(sg).epsilon(1e-14));
    if (sg < 0) ++negatives;
    CHECK(q.x[t - 1] > 0.0);
    // Median of a lognormal is exp(mu) regardless of sigma.
    CHECK(q.true_quantiles[1][t - 1] == doctest::Approx(std::exp(mu)).epsilon(1e-14));
    CHECK(q.true_quantiles[0][t - 1] <= q.true_quantiles[2][t - 1]);
  }
  CHECK(q.negative_sigma_steps.size() == negatives);
  CHECK(negatives > 0u);

  // Empirical coverage of the true quantiles is near the level.
  for (std::size_t i = 0; i < 3; ++i) {
    int below = 0;
    for (std::size_t t = 0; t < q.x.size(); ++t) below += q.x[t] <= q.true_quantiles[i][t];
    CHECK(below / 2000.0 == doctest::Approx(q.levels[i]).epsilon(0.04 / q.levels[i]));
  }

  CHECK(gen_quantile_stream(spec).x == q.x);
  spec.seed = 1;
  CHECK(gen_quantile_stream(spec).x != q.x);
}

TEST_CASE("logistic stream") {
  LogisticStreamSpec spec;
  spec.T = 500;
  const auto s = gen_logistic_stream(spec);
  REQUIRE(s.samples.size() == 500u);
  const double pi = std::acos(-1.0);
  int agree = 0;
  for (std::int64_t t = 1; t <= spec.T; ++t) {
    const Vector th = spec.a * std::sin(2 * pi * t / spec.period_a) + spec.b * std::cos(2 * pi * t / spec.period_b);
    CHECK((s.theta_true[t - 1] - th).norm() <= 1e-14);
    const auto& smp = s.samples[t - 1];
    CHECK((smp.y == 1.0 || smp.y == -1.0));
    CHECK(s.noiseless_labels[t - 1] == (smp.x.dot(th) >= 0 ? 1.0 : -1.0));
    agree += smp.y == s.noiseless_labels[t - 1];
  }
  CHECK(agree > 400);
  CHECK(gen_logistic_stream(spec).samples[10].x == s.samples[10].x);
}

TEST_CASE("synthetic returns") {
  ReturnsStreamSpec spec;
  const auto r = gen_returns_stream(spec);
  CHECK(r.size() == 1027u);
  CHECK(r.dim() == 10);
  CHECK(r.columns.front() == "A01");
  CHECK(r.dates.front() == "D00001");
  for (const auto& row : r.rows) CHECK(row.allFinite());
  CHECK(gen_returns_stream(spec).rows[100] == r.rows[100]);
}

TEST_CASE("CSV parsing") {
  std::istringstream ok("date,a,b\n2020-01-01,1.5,-2\n2020-01-02,0.25,3e-1\n");
  const auto s = parse_csv_returns(ok);
  CHECK(s.date_column == "date");
  CHECK(s.columns == std::vector<std::string>{"a", "b"});
  CHECK(s.dates[1] == "2020-01-02");
  CHECK(s.rows[1](1) == doctest::Approx(0.3));

  std::istringstream pct("date,a\nx,150\n");
  CHECK(parse_csv_returns(pct, {true}).rows[0](0) == doctest::Approx(1.5));

  auto line_of = [](const std::string& text) {
    std::istringstream in(text);
    try {
      parse_csv_returns(in);
    } catch (const DataError& e) {
      return e.line();
    }
    return std::size_t(0) - 1;
  };
  CHECK(line_of("date,a,b\nd1,1,2\nd2,1,abc\n") == 3u);
  CHECK(line_of("date,a,b\nd1,1\n") == 2u);
  CHECK(line_of("date,a,b\nd1,1,2\nd2,,2\n") == 3u);
  CHECK(line_of("date,a,b\nd1,1,2,4\n") == 2u);
  std::istringstream empty("");
  CHECK_THROWS_AS(parse_csv_returns(empty), DataError);
  CHECK_THROWS_AS(load_csv_returns("/nonexistent/returns.csv"), DataError);
}

TEST_CASE("CSV round trip keeps every bit") {
  ReturnsStreamSpec spec;
  spec.T = 50;
  spec.n = 4;
  const auto r = gen_returns_stream(spec);
  std::stringstream buf;
  write_csv_returns(buf, r);
  const auto back = parse_csv_returns(buf);
  REQUIRE(back.size() == r.size());
  CHECK(back.columns == r.columns);
  CHECK(back.dates == r.dates);
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(back.rows[i] == r.rows[i]);
}

TEST_CASE("checked-in return series") {
  const auto r = load_csv_returns(std::string(EWMM_TEST_DATA_DIR) + "/returns_10.csv");
  CHECK(r.size() == 1027u);
  CHECK(r.dim() == 10);
  const auto g = gen_returns_stream({});
  for (std::size_t i = 0; i < r.size(); ++i) CHECK(r.rows[i] == g.rows[i]);
}

TEST_CASE("stream specs round-trip through JSON") {
  QuantileStreamSpec q;
  q.T = 77;
  q.a = 0.4;
  nlohmann::json j = q;
  const auto q2 = j.get<QuantileStreamSpec>();
  CHECK(q2.T == 77);
  CHECK(q2.a == 0.4);

  LogisticStreamSpec l;
  l.sigma = 0.3;
  j = l;
  const auto l2 = j.get<LogisticStreamSpec>();
  CHECK(l2.sigma == 0.3);
  CHECK(l2.a == l.a);

  ReturnsStreamSpec r;
  r.n = 4;
  j = r;
  CHECK(j.get<ReturnsStreamSpec>().n == 4);
}
