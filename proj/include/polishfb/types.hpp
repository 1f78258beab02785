#pragma once

#include <Eigen/Core>

namespace polishfb {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

} // namespace polishfb
