#pragma once

#include <cstdint>

namespace ewmm {

/// Forgetting factor with the given half-life: 2^(-1/H).
double beta_from_halflife(double halflife);

/// Half-life of a forgetting factor: -log 2 / log beta.
double halflife_from_beta(double beta);

/// Normalization constant alpha_t = (1 - beta) / (1 - beta^t), t >= 1.
/// It is the reciprocal of sum_{tau=1..t} beta^(t - tau).
double alpha(std::int64_t t, double beta);

/// alpha_{t+1} * beta / alpha_t: the factor applied to the previous state in
/// every exponentially weighted recursion.
double step_ratio(std::int64_t t, double beta);

/// Normalized weight alpha_t * beta^(t - tau) of sample tau at time t.
double decay_weight(std::int64_t t, std::int64_t tau, double beta);

/// Exponential weighting schedule with a step counter starting at t = 0
/// (no samples yet). The first `advance()` moves to t = 1.
class DecaySchedule {
 public:
  static DecaySchedule from_halflife(double halflife);
  static DecaySchedule from_beta(double beta);

  double beta() const { return beta_; }
  double halflife() const { return halflife_; }
  std::int64_t t() const { return t_; }

  void advance() { ++t_; }
  void reset(std::int64_t t = 0);

  double alpha() const { return ewmm::alpha(t_, beta_); }
  double weight(std::int64_t tau) const { return decay_weight(t_, tau, beta_); }

 private:
  DecaySchedule(double beta, double halflife) : beta_(beta), halflife_(halflife) {}

  double beta_;
  double halflife_;
  std::int64_t t_ = 0;
};

}  // namespace ewmm
