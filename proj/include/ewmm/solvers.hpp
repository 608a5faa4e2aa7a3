#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ewmm/models.hpp"
#include "ewmm/regularizer.hpp"

namespace ewmm {

struct WeightedSample {
  Sample sample;
  double weight;
};

/// minimize  sum_i w_i l(x_i; theta) + surrogate(theta) + shared_weight * shared(theta) + r(theta)
///
/// `shared` is the model's sample-independent term; it is used when the loss
/// sum has been collapsed into `surrogate` (quadratic recursion).
struct SolveSpec {
  LossModelPtr model;
  std::vector<WeightedSample> terms;
  std::optional<QuadraticForm> surrogate;
  double shared_weight = 0.0;
  Regularizer reg = Regularizer::none();
  std::optional<Vector> warm_start;
  double tolerance = 1e-8;
  int max_iters = 500;
};

/// Bitwise equality of every numeric input (samples, weights, surrogate,
/// warm start, tolerances) and identity of the model.
bool identical_inputs(const SolveSpec& a, const SolveSpec& b);

enum class SolveStatus { optimal, max_iters, infeasible_domain };

std::string_view to_string(SolveStatus s);

struct SolveResult {
  Vector theta;
  double objective_value = 0.0;
  int iterations = 0;
  SolveStatus status = SolveStatus::max_iters;
  /// Stationarity residual: gradient norm (smooth), gradient-mapping norm
  /// (prox), duality gap (graphical lasso), 0 (exact scalar scan).
  double certificate = 0.0;
};

/// Objective of the problem at theta (+inf outside the domain).
double objective_value(const SolveSpec& spec, const Vector& theta);

/// Damped Newton with backtracking. Handles smooth regularizers and the
/// zero-sum constraint (Newton steps restricted to the hyperplane).
/// Throws NumericalFailure when the Hessian is not PD after diagonal loading.
SolveResult solve_smooth(const SolveSpec& spec);

/// Accelerated proximal gradient (FISTA) with backtracking and adaptive
/// restart. The regularizer must offer a prox.
SolveResult solve_prox(const SolveSpec& spec);

struct WeightedValue {
  double x;
  double weight;
};

/// Exact minimizer of sum_i w_i pinball(theta - x_i; eta) + quad(theta) for
/// scalar theta and quad with nonnegative curvature, by a breakpoint scan.
/// Throws std::invalid_argument when the objective is unbounded below.
SolveResult solve_scalar_plq(std::span<const WeightedValue> terms, const QuadraticForm& quad, double eta);

struct GlassoOptions {
  double tolerance = 1e-7;  ///< duality gap
  int max_iters = 500;
};

struct GlassoResult {
  SymMatrix precision;
  SymMatrix covariance;  ///< dual variable W (estimated covariance)
  double objective = 0.0;
  double duality_gap = 0.0;
  int iterations = 0;
  bool converged = false;
  bool loaded = false;  ///< diagonal loading was applied to a singular S
};

/// minimize Tr(S Theta) - log det Theta + lambda sum_{i != j} |Theta_ij|
/// by block coordinate descent over columns with a coordinate-descent lasso
/// inner solver. lambda = 0 returns the inverse of S. A singular S is loaded
/// with 1e-8 * trace / m on the diagonal.
GlassoResult graphical_lasso(const SymMatrix& s_emp, double lambda, const GlassoOptions& opts = {});

/// Tr(S Theta) - log det Theta + lambda sum_{i != j} |Theta_ij| (+inf if Theta is not PD).
double graphical_lasso_objective(const SymMatrix& s_emp, const SymMatrix& theta, double lambda);

/// Off-diagonal pairs (i < j) with |Theta_ij| > threshold.
int offdiag_nonzeros(const SymMatrix& theta, double threshold = 1e-4);

/// Picks the solver for the problem: graphical lasso / closed form for the
/// precision-matrix regularizers, the breakpoint scan for scalar pinball
/// losses, Newton for smooth problems, FISTA otherwise.
SolveResult solve(const SolveSpec& spec);

}  // namespace ewmm
