#include "ewmm/catalog.hpp"

#include "ewmm/errors.hpp"

namespace ewmm {

const std::vector<std::string>& model_ids() {
  static const std::vector<std::string> ids = {"ewma",  "huber", "pinball",  "ols",       "ridge",
                                               "lasso", "nnls",  "logistic", "gauss-cov", "sparse-precision",
                                               "pmf"};
  return ids;
}

ModelSpec make_model(std::string_view id, const ModelParams& p) {
  const Index d = p.dim;
  if (id == "ewma") return {std::make_shared<SquareLoss>(d)};
  if (id == "huber") return {std::make_shared<HuberLoss>(d, p.delta)};
  if (id == "pinball") return {std::make_shared<PinballLoss>(p.eta)};
  if (id == "ols") return {std::make_shared<RegressionLoss>(d, ResidualPenalty::square)};
  if (id == "ridge") {
    return {std::make_shared<RegressionLoss>(d, ResidualPenalty::square), Regularizer::sum_squares(p.lambda)};
  }
  if (id == "lasso") {
    return {std::make_shared<RegressionLoss>(d, ResidualPenalty::square), Regularizer::l1(p.lambda)};
  }
  if (id == "nnls") return {std::make_shared<RegressionLoss>(d, ResidualPenalty::square), Regularizer::nonneg()};
  if (id == "logistic") {
    return {std::make_shared<LogisticLoss>(d),
            p.lambda > 0.0 ? Regularizer::sum_squares(p.lambda) : Regularizer::none()};
  }
  if (id == "gauss-cov") return {std::make_shared<GaussCovLoss>(d), Regularizer::neg_logdet()};
  if (id == "sparse-precision") {
    return {std::make_shared<GaussCovLoss>(d), Regularizer::sparse_precision(p.lambda)};
  }
  if (id == "pmf") {
    return {std::make_shared<PmfLoss>(d),
            p.lambda > 0.0 ? Regularizer::sum_squares(p.lambda) : Regularizer::zero_sum()};
  }
  throw ConfigError("unknown model id '" + std::string(id) + "'");
}

}  // namespace ewmm
