#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace gpgrad {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
// All system matrices are real symmetric; row-major keeps mat-vec row sums
// sequential, so products are deterministic for any thread count.
using SpMat = Eigen::SparseMatrix<double, Eigen::RowMajor>;

using Index = Eigen::Index;

}  // namespace gpgrad
