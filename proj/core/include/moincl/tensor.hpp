#pragma once

#include <Eigen/Dense>

namespace moincl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

}  // namespace moincl
