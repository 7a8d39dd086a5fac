#pragma once

#include <Eigen/Dense>

namespace bdz {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

}  // namespace bdz
