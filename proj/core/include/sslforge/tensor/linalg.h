#ifndef SSLFORGE_TENSOR_LINALG_H_
#define SSLFORGE_TENSOR_LINALG_H_

#include <cstddef>
#include <vector>

#include "sslforge/tensor/tensor.h"

namespace sslforge {

// Eigen-decomposition of a symmetric matrix. Values are sorted descending;
// `vectors` is n x n row-major with eigenvector k stored in column k.
struct SymmetricEigen {
  std::vector<double> values;
  std::vector<double> vectors;
  std::size_t n = 0;
  std::size_t sweeps = 0;
};

// Cyclic Jacobi rotations. Stops once the off-diagonal Frobenius norm drops
// below 1e-12 * max(1, ||A||_F) or after `max_sweeps` sweeps. Only the upper
// triangle of `a` is read.
SymmetricEigen symmetric_eigen(const std::vector<double>& a, std::size_t n,
                               std::size_t max_sweeps = 100);

// Singular values of M (n x d), descending, min(n, d) of them, by one-sided
// Jacobi rotations on the columns (rows when n < d). Throws DataError on
// NaN/Inf. Not differentiable.
std::vector<double> svd_values(const Tensor& m);

// Full M^T M (d x d) or, with rows_gram, M M^T (n x n), row-major.
std::vector<double> gram_matrix(const Tensor& m, bool rows_gram);

}  // namespace sslforge

#endif  // SSLFORGE_TENSOR_LINALG_H_
