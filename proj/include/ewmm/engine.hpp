#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <string_view>

#include "ewmm/decay.hpp"
#include "ewmm/rng.hpp"
#include "ewmm/solvers.hpp"

namespace ewmm {

/// x~_{t+1} = step_ratio(t) x~_t + alpha_{t+1} x_{t+1}, for t >= 1.
Vector ewma_step(const Vector& state, const Vector& x, std::int64_t t, double beta);

struct SolverSettings {
  double tolerance = 0.0;  ///< 0 picks the per-solver default
  int max_iters = 500;
};

/// Common interface of the three estimation strategies.
class Estimator {
 public:
  virtual ~Estimator() = default;

  /// Consumes the next sample and returns the estimate at the new time.
  virtual const Vector& step(const Sample& x) = 0;

  std::int64_t steps() const { return schedule_.t(); }
  const DecaySchedule& schedule() const { return schedule_; }
  const Vector& estimate() const { return theta_; }
  const SolveResult& last_result() const { return result_; }
  /// Problem handed to the solver at the latest step.
  const SolveSpec& last_problem() const { return problem_; }

 protected:
  Estimator(LossModelPtr model, Regularizer reg, DecaySchedule schedule, SolverSettings settings);

  SolveSpec base_spec() const;
  const Vector& finish(SolveSpec spec);

  LossModelPtr model_;
  Regularizer reg_;
  DecaySchedule schedule_;
  SolverSettings settings_;
  Vector theta_;
  SolveResult result_;
  SolveSpec problem_;
};

/// Stores every sample and solves the full weighted problem each step.
class NaiveEwmm final : public Estimator {
 public:
  NaiveEwmm(LossModelPtr model, Regularizer reg, DecaySchedule schedule, SolverSettings settings = {});

  const Vector& step(const Sample& x) override;
  std::size_t history_size() const { return history_.size(); }

 private:
  std::vector<Sample> history_;
};

/// Exact fixed-cost recursion on (P_t, p_t, pi_t) for models with a
/// quadratic decomposition.
class QuadRecursiveEwmm final : public Estimator {
 public:
  QuadRecursiveEwmm(LossModelPtr model, Regularizer reg, DecaySchedule schedule, SolverSettings settings = {});

  const Vector& step(const Sample& x) override;
  const QuadraticForm& state() const { return state_; }

  /// Text checkpoint: step counter, schedule, state, last estimate.
  std::string checkpoint() const;
  /// Restores a checkpoint taken from an estimator with the same model.
  void restore(std::string_view text);

 private:
  QuadraticForm state_;
};

enum class TailMode { taylor, fitted, none };

std::string_view to_string(TailMode m);
TailMode tail_mode_from_string(std::string_view s);

/// Probe spread for tail fitting around the previous estimate.
enum class ProbeScale {
  norm_plus_epsilon,  ///< sigma = ||theta_{t-1}||_2 + epsilon
  fifth_of_magnitude  ///< sigma = ||theta_{t-1}||_2 / 5 + epsilon
};

struct FiniteMemoryOptions {
  TailMode mode = TailMode::taylor;
  int memory = 100;        ///< M; the window holds M + 1 samples
  int tail_memory = 300;   ///< M_tail (fitted mode)
  int probes = 0;          ///< L; 0 picks 3 * (m(m+1)/2 + m + 1)
  double epsilon = 1e-3;
  ProbeScale probe_scale = ProbeScale::norm_plus_epsilon;
  std::uint64_t seed = 0;
  int refresh_every = 1;   ///< fitted mode: refit every k steps, decay in between
};

struct TailDiagnostics {
  double residual_rms = 0.0;   ///< latest quadratic-fit residual (fitted mode)
  int fallbacks = 0;           ///< rank-deficient fits replaced by the decayed previous tail
  int folds = 0;               ///< samples folded into the tail surrogate
  bool discarding = false;     ///< some history has been dropped
};

/// Fixed-memory approximation: a window of the latest M + 1 samples plus a
/// convex quadratic surrogate for the older ones.
class FiniteMemoryEwmm final : public Estimator {
 public:
  FiniteMemoryEwmm(LossModelPtr model, Regularizer reg, DecaySchedule schedule, FiniteMemoryOptions opts,
                   SolverSettings settings = {});

  const Vector& step(const Sample& x) override;

  const std::optional<QuadraticForm>& tail() const { return tail_; }
  const FiniteMemoryOptions& options() const { return opts_; }
  const TailDiagnostics& diagnostics() const { return diag_; }
  std::size_t window_size() const { return window_.size(); }
  std::size_t tail_window_size() const { return tail_window_.size(); }
  /// Probe points and values of the latest tail fit.
  const std::vector<EvalPoint>& last_probes() const { return probes_; }

  std::string checkpoint() const;
  void restore(std::string_view text);

 private:
  void fold_taylor(const Sample& leaving);
  void refresh_fit();
  Vector draw_probe_center_scale(double& sigma) const;

  FiniteMemoryOptions opts_;
  std::deque<Sample> window_;
  std::deque<Sample> tail_window_;
  std::optional<QuadraticForm> tail_;
  CounterRng rng_;
  TailDiagnostics diag_;
  std::vector<EvalPoint> probes_;
};

}  // namespace ewmm
