#include "ewmm/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ewmm/errors.hpp"
#include "ewmm/rng.hpp"

namespace ewmm {
namespace {

constexpr double kTwoPi = 2.0 * M_PI;

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

void check_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string(what) + " must be positive");
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / M_SQRT2); }

double inverse_normal_cdf(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw std::invalid_argument("inverse_normal_cdf needs p in [0,1]");
  }
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01,  -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double lo = 0.02425;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - lo) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement.
  for (int i = 0; i < 2; ++i) {
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(kTwoPi) * std::exp(0.5 * x * x);
    x -= u / (1.0 + 0.5 * x * u);
  }
  return x;
}

QuantileStream gen_quantile_stream(const QuantileStreamSpec& spec, const std::vector<double>& levels) {
  if (spec.T < 0) throw ConfigError("quantile stream length T must be nonnegative");
  check_positive(spec.P1, "P1");
  check_positive(spec.P2, "P2");
  check_positive(spec.P3, "P3");
  check_positive(spec.P4, "P4");
  for (double eta : levels) {
    if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("quantile levels must lie in (0,1)");
  }

  QuantileStream out;
  const auto n = static_cast<std::size_t>(spec.T);
  out.x.reserve(n);
  out.mu.reserve(n);
  out.sigma.reserve(n);
  out.levels = levels;
  out.true_quantiles.assign(levels.size(), {});
  std::vector<double> z_eta;
  for (double eta : levels) z_eta.push_back(inverse_normal_cdf(eta));

  CounterRng rng(spec.seed, RngStream::quantile_data);
  for (std::int64_t t = 1; t <= spec.T; ++t) {
    const double td = static_cast<double>(t);
    const double mu = spec.a * std::sin(kTwoPi * td / spec.P1) + spec.b * std::cos(kTwoPi * td / spec.P2);
    const double sg = spec.c * std::sin(kTwoPi * td / spec.P3) + spec.d * std::cos(kTwoPi * td / spec.P4);
    if (sg < 0.0) out.negative_sigma_steps.push_back(t);
    const double sd = std::abs(sg);
    out.mu.push_back(mu);
    out.sigma.push_back(sg);
    out.x.push_back(std::exp(mu + sd * rng.normal()));
    for (std::size_t k = 0; k < levels.size(); ++k) {
      out.true_quantiles[k].push_back(std::exp(mu + sd * z_eta[k]));
    }
  }
  return out;
}

LogisticStream gen_logistic_stream(const LogisticStreamSpec& spec) {
  if (spec.T < 0) throw ConfigError("logistic stream length T must be nonnegative");
  if (spec.a.size() != spec.b.size() || spec.a.size() < 1) {
    throw ConfigError("logistic amplitude vectors must have equal positive length");
  }
  if (!(spec.sigma >= 0.0)) throw ConfigError("logistic noise sigma must be nonnegative");
  check_positive(spec.period_a, "period_a");
  check_positive(spec.period_b, "period_b");

  const Index m = spec.a.size();
  LogisticStream out;
  CounterRng rng(spec.seed, RngStream::logistic_data);
  for (std::int64_t t = 1; t <= spec.T; ++t) {
    const double td = static_cast<double>(t);
    Vector theta = spec.a * std::sin(kTwoPi * td / spec.period_a) + spec.b * std::cos(kTwoPi * td / spec.period_b);
    Vector z(m);
    for (Index i = 0; i < m; ++i) z(i) = theta(i) + rng.normal();
    const double xi = spec.sigma * rng.normal();
    const double margin = z.dot(theta);
    out.noiseless_labels.push_back(margin >= 0.0 ? 1.0 : -1.0);
    const double y = margin + xi >= 0.0 ? 1.0 : -1.0;
    out.samples.push_back(Sample::labeled(std::move(z), y));
    out.theta_true.push_back(std::move(theta));
  }
  return out;
}

ReturnSeries gen_returns_stream(const ReturnsStreamSpec& spec) {
  if (spec.T < 0) throw ConfigError("returns stream length T must be nonnegative");
  if (spec.n < 2) throw ConfigError("returns stream needs at least two assets");
  const Index n = spec.n;
  CounterRng rng(spec.seed, RngStream::returns_data);

  // Fixed loadings drawn from the same stream before the returns.
  Vector market(n), sector(n), idio(n);
  for (Index i = 0; i < n; ++i) {
    market(i) = 0.7 + 0.6 * rng.uniform();
    sector(i) = 0.4 + 0.8 * rng.uniform();
    idio(i) = 0.5 + 0.6 * rng.uniform();
  }

  ReturnSeries out;
  for (Index i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "A%02ld", static_cast<long>(i + 1));
    out.columns.emplace_back(buf);
  }
  for (std::int64_t t = 1; t <= spec.T; ++t) {
    const double td = static_cast<double>(t);
    // Market volatility (percent) with a stress episode around t = 300.
    const double stress = 2.0 * std::exp(-0.5 * std::pow((td - 300.0) / 60.0, 2));
    const double vol_m = 1.0 + 0.6 * (1.0 + std::sin(kTwoPi * td / 400.0)) + stress;
    const double vol_s = 0.6 + 0.4 * (1.0 + std::cos(kTwoPi * td / 550.0));
    const double fm = vol_m * rng.normal();
    const double fa = vol_s * rng.normal();
    const double fb = vol_s * rng.normal();
    Vector r(n);
    for (Index i = 0; i < n; ++i) {
      const double fs = i < n / 2 ? fa : fb;
      r(i) = market(i) * fm + sector(i) * fs + idio(i) * (0.8 + 0.2 * vol_m) * rng.normal();
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "D%05ld", static_cast<long>(t));
    out.dates.emplace_back(buf);
    out.rows.push_back(std::move(r));
  }
  return out;
}

ReturnSeries parse_csv_returns(std::istream& in, const CsvOptions& opts) {
  ReturnSeries out;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) {
      if (!have_header) continue;
      throw DataError("empty row", lineno);
    }
    const auto fields = split_commas(line);
    if (!have_header) {
      if (fields.size() < 2) throw DataError("header needs a date column and at least one data column", lineno);
      for (std::size_t k = 0; k < fields.size(); ++k) {
        if (fields[k].empty()) throw DataError("empty column name in header", lineno);
      }
      out.date_column = fields[0];
      out.columns.assign(fields.begin() + 1, fields.end());
      have_header = true;
      continue;
    }
    if (fields.size() != out.columns.size() + 1) {
      throw DataError("expected " + std::to_string(out.columns.size() + 1) + " fields, found " +
                          std::to_string(fields.size()),
                      lineno);
    }
    Vector row(static_cast<Index>(out.columns.size()));
    for (std::size_t k = 1; k < fields.size(); ++k) {
      const std::string& f = fields[k];
      if (f.empty()) throw DataError("blank field in column '" + out.columns[k - 1] + "'", lineno);
      double v = 0.0;
      const char* begin = f.data();
      if (*begin == '+') ++begin;
      auto r = std::from_chars(begin, f.data() + f.size(), v);
      if (r.ec != std::errc() || r.ptr != f.data() + f.size() || !std::isfinite(v)) {
        throw DataError("non-numeric field '" + f + "' in column '" + out.columns[k - 1] + "'", lineno);
      }
      row(static_cast<Index>(k - 1)) = opts.percent_to_decimal ? v / 100.0 : v;
    }
    out.dates.push_back(fields[0]);
    out.rows.push_back(std::move(row));
  }
  if (!have_header) throw DataError("missing header row", lineno ? lineno : 1);
  return out;
}

ReturnSeries load_csv_returns(const std::string& path, const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  try {
    return parse_csv_returns(in, opts);
  } catch (const DataError& e) {
    throw e.prefixed(path + ": ");
  }
}

void write_csv_returns(std::ostream& out, const ReturnSeries& series) {
  out << series.date_column;
  for (const auto& c : series.columns) out << ',' << c;
  out << '\n';
  char buf[40];
  for (std::size_t r = 0; r < series.rows.size(); ++r) {
    out << (r < series.dates.size() ? series.dates[r] : std::to_string(r + 1));
    for (Index k = 0; k < series.rows[r].size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", series.rows[r](k));
      out << ',' << buf;
    }
    out << '\n';
  }
}

void write_csv_returns(const std::string& path, const ReturnSeries& series) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  write_csv_returns(out, series);
}

// JSON specs. Missing fields keep their defaults.

void from_json(const nlohmann::json& j, QuantileStreamSpec& s) {
  s.T = j.value("T", s.T);
  s.P1 = j.value("P1", s.P1);
  s.P2 = j.value("P2", s.P2);
  s.P3 = j.value("P3", s.P3);
  s.P4 = j.value("P4", s.P4);
  s.a = j.value("a", s.a);
  s.b = j.value("b", s.b);
  s.c = j.value("c", s.c);
  s.d = j.value("d", s.d);
  s.seed = j.value("seed", s.seed);
}

void to_json(nlohmann::json& j, const QuantileStreamSpec& s) {
  j = {{"T", s.T}, {"P1", s.P1}, {"P2", s.P2}, {"P3", s.P3}, {"P4", s.P4}, {"a", s.a},
       {"b", s.b}, {"c", s.c},   {"d", s.d},   {"seed", s.seed}};
}

namespace {
Vector vec_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}
std::vector<double> vec_to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }
}  // namespace

void from_json(const nlohmann::json& j, LogisticStreamSpec& s) {
  s.T = j.value("T", s.T);
  if (j.contains("a")) s.a = vec_from_json(j.at("a"));
  if (j.contains("b")) s.b = vec_from_json(j.at("b"));
  s.sigma = j.value("sigma", s.sigma);
  s.period_a = j.value("period_a", s.period_a);
  s.period_b = j.value("period_b", s.period_b);
  s.seed = j.value("seed", s.seed);
}

void to_json(nlohmann::json& j, const LogisticStreamSpec& s) {
  j = {{"T", s.T},
       {"a", vec_to_std(s.a)},
       {"b", vec_to_std(s.b)},
       {"sigma", s.sigma},
       {"period_a", s.period_a},
       {"period_b", s.period_b},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, ReturnsStreamSpec& s) {
  s.T = j.value("T", s.T);
  s.n = j.value("n", s.n);
  s.seed = j.value("seed", s.seed);
}

void to_json(nlohmann::json& j, const ReturnsStreamSpec& s) { j = {{"T", s.T}, {"n", s.n}, {"seed", s.seed}}; }

}  // namespace ewmm
