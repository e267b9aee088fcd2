#pragma once

#include <vector>

#include "csf/common.hpp"
#include "csf/tensor.hpp"

namespace csf {

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Returns eigenvalues in descending order with matching unit eigenvectors
// (columns of `vectors`, i.e. vectors[i*d + j] is component i of vector j).
struct SymmetricEigen {
  std::vector<double> values;
  std::vector<double> vectors;  // row-major d x d
};

SymmetricEigen symmetric_eigen(const std::vector<double>& matrix, Index d);

struct PcaResult {
  Tensor projections;           // [N,2]
  double eigenvalue_1 = 0.0;    // variance along pc1
  double eigenvalue_2 = 0.0;    // variance along pc2
};

// Centers rows of x: [N,D], computes the sample covariance (N-1 denominator),
// and projects onto the top-2 principal directions. Signs are fixed so the
// largest-magnitude loading of each component is positive. N must be >= 2.
PcaResult pca_top2(const Tensor& x);

}  // namespace csf
