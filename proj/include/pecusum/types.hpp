// =============================================================================
// Shared dense-matrix aliases.
//
// Panels and CUSUM fields sweep whole time slices, so storage is row-major:
// one row per time point, one column per grid point.
// =============================================================================
#pragma once

#include <Eigen/Dense>

namespace pecusum {

using Vec = Eigen::VectorXd;
using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace pecusum
