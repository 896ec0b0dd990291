#pragma once

#include <Eigen/Dense>

namespace odm {

/// Dense 64-bit matrix; windows are stored as (timesteps x features).
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace odm
