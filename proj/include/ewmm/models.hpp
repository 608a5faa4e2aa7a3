#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "ewmm/quadform.hpp"

namespace ewmm {

/// One observation. Plain data models read `x`; regression models read the
/// features from `x` and the target from `y`; the PMF model reads a 1-based
/// category from `y`.
struct Sample {
  Vector x;
  double y = 0.0;

  static Sample point(Vector x) { return {std::move(x), 0.0}; }
  static Sample scalar(double v) { return {Vector::Constant(1, v), 0.0}; }
  static Sample labeled(Vector z, double y) { return {std::move(z), y}; }
  static Sample category(int k) { return {Vector(0), static_cast<double>(k)}; }
};

struct Capabilities {
  bool has_gradient = false;
  bool has_hessian = false;
  bool has_quadratic_decomposition = false;
};

enum class ParamDomain { euclidean, pd_cone, zero_sum, box };

/// A convex, sample-independent function of theta (log-partition, log-sum-exp).
class SmoothTerm {
 public:
  virtual ~SmoothTerm() = default;
  virtual double value(const Vector& theta) const = 0;
  virtual Vector gradient(const Vector& theta) const = 0;
  virtual Matrix hessian(const Vector& theta) const = 0;
  virtual bool in_domain(const Vector&) const { return true; }
};

/// Convex per-sample loss l(x; theta).
///
/// Models with a quadratic decomposition satisfy
///   l(x; theta) = decompose(x)(theta) + shared(theta)
/// where `shared` is the optional sample-independent term returned by
/// shared_term(). Because normalized weights sum to one, the exponentially
/// weighted loss is then the weighted sum of decompositions plus `shared`.
class LossModel {
 public:
  virtual ~LossModel() = default;

  virtual std::string_view id() const = 0;
  virtual Index param_dim() const = 0;
  virtual Capabilities capabilities() const = 0;
  virtual ParamDomain domain() const { return ParamDomain::euclidean; }
  virtual bool in_domain(const Vector& theta) const;

  /// Throws std::invalid_argument if the sample does not fit the model.
  virtual void validate(const Sample& s) const = 0;

  virtual double value(const Sample& s, const Vector& theta) const = 0;
  virtual Vector gradient(const Sample& s, const Vector& theta) const;
  virtual Matrix hessian(const Sample& s, const Vector& theta) const;
  /// Defaults to gradient(); nonsmooth losses override.
  virtual Vector subgradient(const Sample& s, const Vector& theta) const;
  virtual QuadraticForm decompose(const Sample& s) const;
  virtual const SmoothTerm* shared_term() const { return nullptr; }

  /// Quantile level when the loss is the scalar pinball loss.
  virtual std::optional<double> pinball_level() const { return std::nullopt; }

  /// Starting point before any estimate exists.
  virtual Vector initial_theta() const { return Vector::Zero(param_dim()); }
};

using LossModelPtr = std::shared_ptr<const LossModel>;

// Scalar building blocks.

/// Huber convention: r^2 for |r| <= delta, else 2 delta |r| - delta^2.
double huber(double r, double delta);
double huber_deriv(double r, double delta);
double huber_second(double r, double delta);
/// max{(1 - eta) u, -eta u} with u = theta - x.
double pinball(double u, double eta);
/// log(1 + exp(u)) without overflow.
double softplus(double u);
double logsumexp(const Vector& v);
Vector softmax(const Vector& v);

// Symmetric matrix parameters are vectorized over the upper triangle (row-major)
// with off-diagonals scaled by sqrt(2), so svec(A).dot(svec(B)) == Tr(A B).
Index svec_dim(Index n);
Index smat_dim(Index svec_size);
Vector svec(const SymMatrix& a);
SymMatrix smat(const Vector& v);

// Loss catalog.

/// ||theta - x||^2
class SquareLoss final : public LossModel {
 public:
  explicit SquareLoss(Index dim);
  std::string_view id() const override { return "ewma"; }
  Index param_dim() const override { return dim_; }
  Capabilities capabilities() const override { return {true, true, true}; }
  void validate(const Sample& s) const override;
  double value(const Sample& s, const Vector& theta) const override;
  Vector gradient(const Sample& s, const Vector& theta) const override;
  Matrix hessian(const Sample& s, const Vector& theta) const override;
  QuadraticForm decompose(const Sample& s) const override;

 private:
  Index dim_;
};

/// sum_i huber(theta_i - x_i; delta), applied per coordinate.
class HuberLoss final : public LossModel {
 public:
  HuberLoss(Index dim, double delta);
  std::string_view id() const override { return "huber"; }
  Index param_dim() const override { return dim_; }
  Capabilities capabilities() const override { return {true, true, false}; }
  void validate(const Sample& s) const override;
  double value(const Sample& s, const Vector& theta) const override;
  Vector gradient(const Sample& s, const Vector& theta) const override;
  Matrix hessian(const Sample& s, const Vector& theta) const override;

 private:
  Index dim_;
  double delta_;
};

/// Scalar pinball loss max{(1 - eta)(theta - x), eta (x - theta)}.
class PinballLoss final : public LossModel {
 public:
  explicit PinballLoss(double eta);
  std::string_view id() const override { return "pinball"; }
  Index param_dim() const override { return 1; }
  Capabilities capabilities() const override { return {false, false, false}; }
  void validate(const Sample& s) const override;
  double value(const Sample& s, const Vector& theta) const override;
  Vector subgradient(const Sample& s, const Vector& theta) const override;
  std::optional<double> pinball_level() const override { return eta_; }
  double eta() const { return eta_; }

 private:
  double eta_;
};

enum class ResidualPenalty { square, huber, pinball };

/// L(y - theta^T z) for square, Huber, or pinball L.
class RegressionLoss final : public LossModel {
 public:
  RegressionLoss(Index dim, ResidualPenalty penalty, double param = 1.0);
  std::string_view id() const override;
  Index param_dim() const override { return dim_; }
  Capabilities capabilities() const override;
  void validate(const Sample& s) const override;
  double value(const Sample& s, const Vector& theta) const override;
  Vector gradient(const Sample& s, const Vector& theta) const override;
  Matrix hessian(const Sample& s, const Vector& theta) const override;
  Vector subgradient(const Sample& s, const Vector& theta) const override;
  QuadraticForm decompose(const Sample& s) const override;

 private:
  Index dim_;
  ResidualPenalty penalty_;
  double param_;  // Huber delta or pinball eta
};

/// log(1 + exp(-y z^T theta)), y in {-1, +1}.
class LogisticLoss final : public LossModel {
 public:
  explicit LogisticLoss(Index dim);
  std::string_view id() const override { return "logistic"; }
  Index param_dim() const override { return dim_; }
  Capabilities capabilities() const override { return {true, true, false}; }
  void validate(const Sample& s) const override;
  double value(const Sample& s, const Vector& theta) const override;
  Vector gradient(const Sample& s, const Vector& theta) const override;
  Matrix hessian(const Sample& s, const Vector& theta) const override;

 private:
  Index dim_;
};

/// Linear part x^T Theta x = Tr(x x^T Theta) of the Gaussian negative
/// log-likelihood; theta = svec(Theta). The -log det Theta part is carried by
/// the neg-logdet regularizer.
class GaussCovLoss final : public LossModel {
 public:
  explicit GaussCovLoss(Index n);
  std::string_view id() const override { return "gauss-cov"; }
  Index param_dim() const override { return svec_dim(n_); }
  Index data_dim() const { return n_; }
  Capabilities capabilities() const override { return {true, true, true}; }
  ParamDomain domain() const override { return ParamDomain::pd_cone; }
  bool in_domain(const Vector& theta) const override;
  void validate(const Sample& s) const override;
  double value(const Sample& s, const Vector& theta) const override;
  Vector gradient(const Sample& s, const Vector& theta) const override;
  Matrix hessian(const Sample& s, const Vector& theta) const override;
  QuadraticForm decompose(const Sample& s) const override;
  Vector initial_theta() const override;

 private:
  Index n_;
};

/// -theta_k + logsumexp(theta) for category k in 1..m.
class PmfLoss final : public LossModel {
 public:
  explicit PmfLoss(Index m);
  std::string_view id() const override { return "pmf"; }
  Index param_dim() const override { return m_; }
  Capabilities capabilities() const override { return {true, true, true}; }
  void validate(const Sample& s) const override;
  double value(const Sample& s, const Vector& theta) const override;
  Vector gradient(const Sample& s, const Vector& theta) const override;
  Matrix hessian(const Sample& s, const Vector& theta) const override;
  QuadraticForm decompose(const Sample& s) const override;
  const SmoothTerm* shared_term() const override;

 private:
  Index m_;
  std::shared_ptr<SmoothTerm> lse_;
};

/// Exponential family p(x; theta) = h(x) exp(theta^T T(x) - A(theta)).
struct ExponentialFamily {
  std::string name;
  Index param_dim = 0;
  std::function<Vector(const Sample&)> sufficient_statistic;
  std::function<double(const Vector&)> log_partition;
  std::function<Vector(const Vector&)> log_partition_gradient;
  std::function<Matrix(const Vector&)> log_partition_hessian;
  std::function<bool(const Vector&)> in_domain;  // may be empty: all of R^m
  std::function<double(const Sample&)> log_base_measure;  // dropped in fitting

  /// T(x) = x in {0,1}, A(theta) = log(1 + e^theta).
  static ExponentialFamily bernoulli();
  /// Unit-variance Gaussian: T(x) = x, A(theta) = theta^2 / 2.
  static ExponentialFamily gaussian_unit_variance();
  /// T(x) = x in {0,1,...}, A(theta) = e^theta.
  static ExponentialFamily poisson();
};

/// -theta^T T(x) + A(theta)  (the -log h(x) constant is dropped).
class ExpFamLoss final : public LossModel {
 public:
  explicit ExpFamLoss(ExponentialFamily family);
  ExpFamLoss(const ExpFamLoss&) = delete;
  ExpFamLoss& operator=(const ExpFamLoss&) = delete;
  std::string_view id() const override { return family_.name; }
  Index param_dim() const override { return family_.param_dim; }
  Capabilities capabilities() const override;
  bool in_domain(const Vector& theta) const override;
  void validate(const Sample& s) const override;
  double value(const Sample& s, const Vector& theta) const override;
  Vector gradient(const Sample& s, const Vector& theta) const override;
  Matrix hessian(const Sample& s, const Vector& theta) const override;
  QuadraticForm decompose(const Sample& s) const override;
  const SmoothTerm* shared_term() const override;
  const ExponentialFamily& family() const { return family_; }

 private:
  ExponentialFamily family_;
  std::shared_ptr<SmoothTerm> partition_;
};

}  // namespace ewmm
