#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "ewmm/models.hpp"

namespace ewmm {

double normal_cdf(double x);
/// Acklam's rational approximation refined by one Halley step; |error| < 1e-12.
double inverse_normal_cdf(double p);

/// Scalar stream x_t = exp(z_t), z_t ~ N(mu_t, sigma_t^2) with
///   mu_t = a sin(2 pi t / P1) + b cos(2 pi t / P2)
///   sigma_t = c sin(2 pi t / P3) + d cos(2 pi t / P4)
/// |sigma_t| is used where the sinusoid is negative.
struct QuantileStreamSpec {
  std::int64_t T = 2000;
  double P1 = 2100.0, P2 = 1500.0, P3 = 1100.0, P4 = 1700.0;
  double a = -0.17, b = 0.23, c = -0.12, d = 0.13;
  std::uint64_t seed = 0;
};

struct QuantileStream {
  std::vector<double> x;
  std::vector<double> mu;
  std::vector<double> sigma;  ///< signed sinusoid value
  std::vector<double> levels;
  std::vector<std::vector<double>> true_quantiles;  ///< [level][t-1] = exp(mu_t + |sigma_t| Phi^{-1}(eta))
  std::vector<std::int64_t> negative_sigma_steps;   ///< t with sigma_t < 0
};

QuantileStream gen_quantile_stream(const QuantileStreamSpec& spec,
                                   const std::vector<double>& levels = {0.15, 0.5, 0.85});

/// theta_t = a sin(2 pi t / period_a) + b cos(2 pi t / period_b),
/// z_t ~ N(theta_t, I), y_t = sign(z_t^T theta_t + xi_t), xi_t ~ N(0, sigma^2),
/// sign(0) = +1.
struct LogisticStreamSpec {
  std::int64_t T = 2000;
  Vector a = (Vector(3) << 0.17, 0.23, -0.12).finished();
  Vector b = (Vector(3) << 0.13, -0.11, -0.19).finished();
  double sigma = 0.1;
  double period_a = 4000.0;
  double period_b = 6000.0;
  std::uint64_t seed = 0;
};

struct LogisticStream {
  std::vector<Sample> samples;
  std::vector<Vector> theta_true;
  std::vector<double> noiseless_labels;  ///< sign(z_t^T theta_t)
};

LogisticStream gen_logistic_stream(const LogisticStreamSpec& spec);

/// Vector return series with a date label per row.
struct ReturnSeries {
  std::string date_column = "date";
  std::vector<std::string> columns;
  std::vector<std::string> dates;
  std::vector<Vector> rows;

  Index dim() const { return static_cast<Index>(columns.size()); }
  std::size_t size() const { return rows.size(); }
};

/// Synthetic daily returns in percent: a market factor with slowly varying
/// volatility, two sector factors and idiosyncratic noise.
struct ReturnsStreamSpec {
  std::int64_t T = 1027;
  Index n = 10;
  std::uint64_t seed = 0;
};

ReturnSeries gen_returns_stream(const ReturnsStreamSpec& spec);

struct CsvOptions {
  bool percent_to_decimal = false;
};

/// Header row required; first column is an opaque date label, the rest numeric.
/// Throws DataError with the 1-based line number of the offending row.
ReturnSeries parse_csv_returns(std::istream& in, const CsvOptions& opts = {});
ReturnSeries load_csv_returns(const std::string& path, const CsvOptions& opts = {});
/// Writes values with %.17g.
void write_csv_returns(std::ostream& out, const ReturnSeries& series);
void write_csv_returns(const std::string& path, const ReturnSeries& series);

void from_json(const nlohmann::json& j, QuantileStreamSpec& s);
void to_json(nlohmann::json& j, const QuantileStreamSpec& s);
void from_json(const nlohmann::json& j, LogisticStreamSpec& s);
void to_json(nlohmann::json& j, const LogisticStreamSpec& s);
void from_json(const nlohmann::json& j, ReturnsStreamSpec& s);
void to_json(nlohmann::json& j, const ReturnsStreamSpec& s);

}  // namespace ewmm
