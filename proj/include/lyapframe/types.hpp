#pragma once

#include <Eigen/Dense>

namespace lyapframe {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

} // namespace lyapframe
