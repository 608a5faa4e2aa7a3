#include "ewmm/decay.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ewmm {
namespace {

void check_beta(double beta) {
  if (!(beta > 0.0 && beta < 1.0)) {
    throw std::invalid_argument("forgetting factor must lie in (0,1), got " + std::to_string(beta));
  }
}

void check_step(std::int64_t t) {
  if (t < 1) throw std::invalid_argument("step index must be >= 1, got " + std::to_string(t));
}

// 1 - beta^k evaluated as -expm1(k log beta); stays accurate for beta near 1
// and avoids drift from repeated multiplication.
double one_minus_pow(double log_beta, double k) { return -std::expm1(k * log_beta); }

}  // namespace

double beta_from_halflife(double halflife) {
  if (!(halflife > 0.0) || !std::isfinite(halflife)) {
    throw std::invalid_argument("half-life must be positive and finite, got " +
                                std::to_string(halflife));
  }
  return std::exp2(-1.0 / halflife);
}

double halflife_from_beta(double beta) {
  check_beta(beta);
  return -std::log(2.0) / std::log(beta);
}

double alpha(std::int64_t t, double beta) {
  check_step(t);
  check_beta(beta);
  if (t == 1) return 1.0;
  const double lb = std::log(beta);
  return one_minus_pow(lb, 1.0) / one_minus_pow(lb, static_cast<double>(t));
}

double step_ratio(std::int64_t t, double beta) {
  check_step(t);
  check_beta(beta);
  const double lb = std::log(beta);
  const double k = static_cast<double>(t);
  return beta * one_minus_pow(lb, k) / one_minus_pow(lb, k + 1.0);
}

double decay_weight(std::int64_t t, std::int64_t tau, double beta) {
  if (tau < 1 || tau > t) {
    throw std::invalid_argument("sample index must lie in [1, t]");
  }
  const double a = alpha(t, beta);
  if (tau == t) return a;
  return a * std::exp(static_cast<double>(t - tau) * std::log(beta));
}

DecaySchedule DecaySchedule::from_halflife(double halflife) {
  return DecaySchedule(beta_from_halflife(halflife), halflife);
}

DecaySchedule DecaySchedule::from_beta(double beta) {
  return DecaySchedule(beta, halflife_from_beta(beta));
}

void DecaySchedule::reset(std::int64_t t) {
  if (t < 0) throw std::invalid_argument("step counter must be nonnegative");
  t_ = t;
}

}  // namespace ewmm
