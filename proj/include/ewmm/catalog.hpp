#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ewmm/models.hpp"
#include "ewmm/regularizer.hpp"

namespace ewmm {

/// Loss plus regularizer, as addressed by the string identifiers the CLI uses.
struct ModelSpec {
  LossModelPtr loss;
  Regularizer reg = Regularizer::none();
};

struct ModelParams {
  Index dim = 1;          ///< parameter or data dimension, depending on the model
  double lambda = 0.0;    ///< regularization weight
  double delta = 1.0;     ///< Huber threshold
  double eta = 0.5;       ///< quantile level
};

/// ids: ewma, huber, pinball, ols, ridge, lasso, nnls, logistic, gauss-cov,
/// sparse-precision, pmf. Throws ConfigError for an unknown id.
ModelSpec make_model(std::string_view id, const ModelParams& params);

const std::vector<std::string>& model_ids();

}  // namespace ewmm
