#pragma once

#include <Eigen/Dense>

namespace ewmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

}  // namespace ewmm
