#include "ewmm/models.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ewmm {
namespace {

void check_theta(const LossModel& m, const Vector& theta) {
  if (theta.size() != m.param_dim()) {
    throw std::invalid_argument(std::string(m.id()) + ": parameter dimension " +
                                std::to_string(theta.size()) + ", expected " +
                                std::to_string(m.param_dim()));
  }
}

void check_dim(std::string_view who, Index got, Index want) {
  if (got != want) {
    throw std::invalid_argument(std::string(who) + ": sample dimension " + std::to_string(got) +
                                ", expected " + std::to_string(want));
  }
}

void check_sample(std::string_view who, const Sample& s, Index want) {
  check_dim(who, s.x.size(), want);
  if (!s.x.allFinite() || !std::isfinite(s.y)) throw std::invalid_argument(std::string(who) + ": non-finite sample");
}

double sigmoid(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

class LogSumExp final : public SmoothTerm {
 public:
  double value(const Vector& theta) const override { return logsumexp(theta); }
  Vector gradient(const Vector& theta) const override { return softmax(theta); }
  Matrix hessian(const Vector& theta) const override {
    const Vector s = softmax(theta);
    Matrix h = -s * s.transpose();
    h.diagonal() += s;
    return h;
  }
};

class LogPartition final : public SmoothTerm {
 public:
  explicit LogPartition(const ExponentialFamily& f) : f_(f) {}
  double value(const Vector& theta) const override { return f_.log_partition(theta); }
  Vector gradient(const Vector& theta) const override { return f_.log_partition_gradient(theta); }
  Matrix hessian(const Vector& theta) const override {
    if (!f_.log_partition_hessian) throw std::logic_error(f_.name + ": no log-partition Hessian");
    return f_.log_partition_hessian(theta);
  }
  bool in_domain(const Vector& theta) const override {
    return !f_.in_domain || f_.in_domain(theta);
  }

 private:
  const ExponentialFamily& f_;
};

}  // namespace

// Scalar helpers.

double huber(double r, double delta) {
  const double a = std::abs(r);
  return a <= delta ? r * r : 2.0 * delta * a - delta * delta;
}

double huber_deriv(double r, double delta) {
  if (std::abs(r) <= delta) return 2.0 * r;
  return r > 0.0 ? 2.0 * delta : -2.0 * delta;
}

double huber_second(double r, double delta) { return std::abs(r) <= delta ? 2.0 : 0.0; }

double pinball(double u, double eta) { return std::max((1.0 - eta) * u, -eta * u); }

double softplus(double u) { return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u))); }

double logsumexp(const Vector& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

Vector softmax(const Vector& v) {
  const Vector e = (v.array() - v.maxCoeff()).exp().matrix();
  return e / e.sum();
}

Index svec_dim(Index n) { return n * (n + 1) / 2; }

Index smat_dim(Index svec_size) {
  const auto n = static_cast<Index>(std::llround((std::sqrt(8.0 * svec_size + 1.0) - 1.0) / 2.0));
  if (svec_dim(n) != svec_size) throw std::invalid_argument("length is not a triangular number");
  return n;
}

Vector svec(const SymMatrix& a) {
  const Index n = a.dim();
  Vector v(svec_dim(n));
  Index k = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) v(k++) = i == j ? a(i, i) : M_SQRT2 * a(i, j);
  return v;
}

SymMatrix smat(const Vector& v) {
  const Index n = smat_dim(v.size());
  SymMatrix a(n);
  Index k = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) a.set(i, j, i == j ? v(k++) : v(k++) / M_SQRT2);
  return a;
}

// LossModel defaults.

bool LossModel::in_domain(const Vector& theta) const {
  return theta.size() == param_dim() && theta.allFinite();
}

Vector LossModel::gradient(const Sample&, const Vector&) const {
  throw std::logic_error(std::string(id()) + ": gradient not available");
}

Matrix LossModel::hessian(const Sample&, const Vector&) const {
  throw std::logic_error(std::string(id()) + ": Hessian not available");
}

Vector LossModel::subgradient(const Sample& s, const Vector& theta) const {
  return gradient(s, theta);
}

QuadraticForm LossModel::decompose(const Sample&) const {
  throw std::logic_error(std::string(id()) + ": no quadratic decomposition");
}

// Square loss.

SquareLoss::SquareLoss(Index dim) : dim_(dim) {
  if (dim < 1) throw std::invalid_argument("ewma: dimension must be positive");
}

void SquareLoss::validate(const Sample& s) const { check_sample(id(), s, dim_); }

double SquareLoss::value(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  return (theta - s.x).squaredNorm();
}

Vector SquareLoss::gradient(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  return 2.0 * (theta - s.x);
}

Matrix SquareLoss::hessian(const Sample&, const Vector&) const {
  return 2.0 * Matrix::Identity(dim_, dim_);
}

QuadraticForm SquareLoss::decompose(const Sample& s) const {
  validate(s);
  return {2.0 * SymMatrix::identity(dim_), -2.0 * s.x, s.x.squaredNorm()};
}

// Huber.

HuberLoss::HuberLoss(Index dim, double delta) : dim_(dim), delta_(delta) {
  if (dim < 1) throw std::invalid_argument("huber: dimension must be positive");
  if (!(delta > 0.0)) throw std::invalid_argument("huber: threshold must be positive");
}

void HuberLoss::validate(const Sample& s) const { check_sample(id(), s, dim_); }

double HuberLoss::value(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  double sum = 0.0;
  for (Index i = 0; i < dim_; ++i) sum += huber(theta(i) - s.x(i), delta_);
  return sum;
}

Vector HuberLoss::gradient(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  Vector g(dim_);
  for (Index i = 0; i < dim_; ++i) g(i) = huber_deriv(theta(i) - s.x(i), delta_);
  return g;
}

Matrix HuberLoss::hessian(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  Vector d(dim_);
  for (Index i = 0; i < dim_; ++i) d(i) = huber_second(theta(i) - s.x(i), delta_);
  return d.asDiagonal();
}

// Pinball.

PinballLoss::PinballLoss(double eta) : eta_(eta) {
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("pinball: quantile level must lie in [0,1]");
}

void PinballLoss::validate(const Sample& s) const { check_sample(id(), s, 1); }

double PinballLoss::value(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  return pinball(theta(0) - s.x(0), eta_);
}

Vector PinballLoss::subgradient(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  const double u = theta(0) - s.x(0);
  return Vector::Constant(1, u > 0.0 ? 1.0 - eta_ : (u < 0.0 ? -eta_ : 0.0));
}

// Regression.

RegressionLoss::RegressionLoss(Index dim, ResidualPenalty penalty, double param)
    : dim_(dim), penalty_(penalty), param_(param) {
  if (dim < 1) throw std::invalid_argument("regression: dimension must be positive");
  if (penalty == ResidualPenalty::huber && !(param > 0.0)) {
    throw std::invalid_argument("regression: Huber threshold must be positive");
  }
  if (penalty == ResidualPenalty::pinball && !(param >= 0.0 && param <= 1.0)) {
    throw std::invalid_argument("regression: quantile level must lie in [0,1]");
  }
}

std::string_view RegressionLoss::id() const {
  switch (penalty_) {
    case ResidualPenalty::square: return "ols";
    case ResidualPenalty::huber: return "huber-regression";
    case ResidualPenalty::pinball: return "quantile-regression";
  }
  return "regression";
}

Capabilities RegressionLoss::capabilities() const {
  switch (penalty_) {
    case ResidualPenalty::square: return {true, true, true};
    case ResidualPenalty::huber: return {true, true, false};
    case ResidualPenalty::pinball: return {false, false, false};
  }
  return {};
}

void RegressionLoss::validate(const Sample& s) const { check_sample(id(), s, dim_); }

double RegressionLoss::value(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  const double r = s.y - theta.dot(s.x);
  switch (penalty_) {
    case ResidualPenalty::square: return r * r;
    case ResidualPenalty::huber: return huber(r, param_);
    case ResidualPenalty::pinball: return pinball(-r, param_);
  }
  return 0.0;
}

Vector RegressionLoss::gradient(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  const double r = s.y - theta.dot(s.x);
  switch (penalty_) {
    case ResidualPenalty::square: return -2.0 * r * s.x;
    case ResidualPenalty::huber: return -huber_deriv(r, param_) * s.x;
    case ResidualPenalty::pinball: break;
  }
  return LossModel::gradient(s, theta);
}

Matrix RegressionLoss::hessian(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  const double r = s.y - theta.dot(s.x);
  switch (penalty_) {
    case ResidualPenalty::square: return 2.0 * s.x * s.x.transpose();
    case ResidualPenalty::huber: return huber_second(r, param_) * s.x * s.x.transpose();
    case ResidualPenalty::pinball: break;
  }
  return LossModel::hessian(s, theta);
}

Vector RegressionLoss::subgradient(const Sample& s, const Vector& theta) const {
  if (penalty_ != ResidualPenalty::pinball) return gradient(s, theta);
  validate(s);
  check_theta(*this, theta);
  const double u = theta.dot(s.x) - s.y;
  const double d = u > 0.0 ? 1.0 - param_ : (u < 0.0 ? -param_ : 0.0);
  return d * s.x;
}

QuadraticForm RegressionLoss::decompose(const Sample& s) const {
  if (penalty_ != ResidualPenalty::square) return LossModel::decompose(s);
  validate(s);
  return {2.0 * SymMatrix::outer(s.x), -2.0 * s.y * s.x, s.y * s.y};
}

// Logistic.

LogisticLoss::LogisticLoss(Index dim) : dim_(dim) {
  if (dim < 1) throw std::invalid_argument("logistic: dimension must be positive");
}

void LogisticLoss::validate(const Sample& s) const {
  check_sample(id(), s, dim_);
  if (s.y != 1.0 && s.y != -1.0) throw std::invalid_argument("logistic: label must be -1 or +1");
}

double LogisticLoss::value(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  return softplus(-s.y * s.x.dot(theta));
}

Vector LogisticLoss::gradient(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  const double u = -s.y * s.x.dot(theta);
  return -s.y * sigmoid(u) * s.x;
}

Matrix LogisticLoss::hessian(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  const double sg = sigmoid(-s.y * s.x.dot(theta));
  return sg * (1.0 - sg) * s.x * s.x.transpose();
}

// Gaussian covariance (linear part).

GaussCovLoss::GaussCovLoss(Index n) : n_(n) {
  if (n < 1) throw std::invalid_argument("gauss-cov: dimension must be positive");
}

bool GaussCovLoss::in_domain(const Vector& theta) const {
  return LossModel::in_domain(theta) && is_positive_definite(smat(theta));
}

void GaussCovLoss::validate(const Sample& s) const { check_sample(id(), s, n_); }

double GaussCovLoss::value(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  return s.x.dot(smat(theta) * s.x);
}

Vector GaussCovLoss::gradient(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  return svec(SymMatrix::outer(s.x));
}

Matrix GaussCovLoss::hessian(const Sample&, const Vector&) const {
  return Matrix::Zero(param_dim(), param_dim());
}

QuadraticForm GaussCovLoss::decompose(const Sample& s) const {
  validate(s);
  const Index d = param_dim();
  return {SymMatrix(d), svec(SymMatrix::outer(s.x)), 0.0};
}

Vector GaussCovLoss::initial_theta() const { return svec(SymMatrix::identity(n_)); }

// PMF.

PmfLoss::PmfLoss(Index m) : m_(m), lse_(std::make_shared<LogSumExp>()) {
  if (m < 2) throw std::invalid_argument("pmf: need at least two categories");
}

void PmfLoss::validate(const Sample& s) const {
  const double k = s.y;
  if (!(k >= 1.0 && k <= static_cast<double>(m_)) || k != std::floor(k)) {
    throw std::invalid_argument("pmf: category must be an integer in 1.." + std::to_string(m_));
  }
}

double PmfLoss::value(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  return -theta(static_cast<Index>(s.y) - 1) + logsumexp(theta);
}

Vector PmfLoss::gradient(const Sample& s, const Vector& theta) const {
  validate(s);
  check_theta(*this, theta);
  Vector g = softmax(theta);
  g(static_cast<Index>(s.y) - 1) -= 1.0;
  return g;
}

Matrix PmfLoss::hessian(const Sample&, const Vector& theta) const { return lse_->hessian(theta); }

QuadraticForm PmfLoss::decompose(const Sample& s) const {
  validate(s);
  QuadraticForm q = QuadraticForm::zero(m_);
  q.p(static_cast<Index>(s.y) - 1) = -1.0;
  return q;
}

const SmoothTerm* PmfLoss::shared_term() const { return lse_.get(); }

// Exponential families.

ExponentialFamily ExponentialFamily::bernoulli() {
  ExponentialFamily f;
  f.name = "bernoulli";
  f.param_dim = 1;
  f.sufficient_statistic = [](const Sample& s) {
    if (s.x.size() != 1 || (s.x(0) != 0.0 && s.x(0) != 1.0)) {
      throw std::invalid_argument("bernoulli: sample must be 0 or 1");
    }
    return s.x;
  };
  f.log_partition = [](const Vector& th) { return softplus(th(0)); };
  f.log_partition_gradient = [](const Vector& th) { return Vector::Constant(1, sigmoid(th(0))); };
  f.log_partition_hessian = [](const Vector& th) {
    const double s = sigmoid(th(0));
    return Matrix::Constant(1, 1, s * (1.0 - s));
  };
  f.log_base_measure = [](const Sample&) { return 0.0; };
  return f;
}

ExponentialFamily ExponentialFamily::gaussian_unit_variance() {
  ExponentialFamily f;
  f.name = "gaussian";
  f.param_dim = 1;
  f.sufficient_statistic = [](const Sample& s) {
    if (s.x.size() != 1) throw std::invalid_argument("gaussian: scalar sample expected");
    return s.x;
  };
  f.log_partition = [](const Vector& th) { return 0.5 * th(0) * th(0); };
  f.log_partition_gradient = [](const Vector& th) { return th; };
  f.log_partition_hessian = [](const Vector&) { return Matrix::Identity(1, 1); };
  f.log_base_measure = [](const Sample& s) {
    return -0.5 * s.x(0) * s.x(0) - 0.5 * std::log(2.0 * M_PI);
  };
  return f;
}

ExponentialFamily ExponentialFamily::poisson() {
  ExponentialFamily f;
  f.name = "poisson";
  f.param_dim = 1;
  f.sufficient_statistic = [](const Sample& s) {
    if (s.x.size() != 1 || !(s.x(0) >= 0.0) || s.x(0) != std::floor(s.x(0))) {
      throw std::invalid_argument("poisson: sample must be a nonnegative integer");
    }
    return s.x;
  };
  f.log_partition = [](const Vector& th) { return std::exp(th(0)); };
  f.log_partition_gradient = [](const Vector& th) { return Vector::Constant(1, std::exp(th(0))); };
  f.log_partition_hessian = [](const Vector& th) { return Matrix::Constant(1, 1, std::exp(th(0))); };
  f.log_base_measure = [](const Sample& s) { return -std::lgamma(s.x(0) + 1.0); };
  return f;
}

ExpFamLoss::ExpFamLoss(ExponentialFamily family)
    : family_(std::move(family)), partition_(std::make_shared<LogPartition>(family_)) {
  if (family_.param_dim < 1 || !family_.sufficient_statistic || !family_.log_partition ||
      !family_.log_partition_gradient) {
    throw std::invalid_argument("exponential family needs T, A and grad A");
  }
}

Capabilities ExpFamLoss::capabilities() const {
  return {true, static_cast<bool>(family_.log_partition_hessian), true};
}

bool ExpFamLoss::in_domain(const Vector& theta) const {
  return LossModel::in_domain(theta) && partition_->in_domain(theta);
}

void ExpFamLoss::validate(const Sample& s) const {
  check_dim(id(), family_.sufficient_statistic(s).size(), family_.param_dim);
}

double ExpFamLoss::value(const Sample& s, const Vector& theta) const {
  check_theta(*this, theta);
  if (!in_domain(theta)) throw std::invalid_argument(family_.name + ": parameter outside the domain of A");
  return -theta.dot(family_.sufficient_statistic(s)) + family_.log_partition(theta);
}

Vector ExpFamLoss::gradient(const Sample& s, const Vector& theta) const {
  check_theta(*this, theta);
  return -family_.sufficient_statistic(s) + family_.log_partition_gradient(theta);
}

Matrix ExpFamLoss::hessian(const Sample&, const Vector& theta) const {
  return partition_->hessian(theta);
}

QuadraticForm ExpFamLoss::decompose(const Sample& s) const {
  const Index m = family_.param_dim;
  return {SymMatrix(m), -family_.sufficient_statistic(s), 0.0};
}

const SmoothTerm* ExpFamLoss::shared_term() const { return partition_.get(); }

}  // namespace ewmm
