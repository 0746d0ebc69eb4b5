#pragma once

#include <cstdint>
#include <functional>

#include <Eigen/Dense>

namespace feller {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
/// Row-major storage for kernel matrices (rows are start nodes).
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Real-valued function on the state space.
using ScalarField = std::function<double(const Vec&)>;

}  // namespace feller
