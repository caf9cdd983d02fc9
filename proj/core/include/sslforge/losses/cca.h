#ifndef SSLFORGE_LOSSES_CCA_H_
#define SSLFORGE_LOSSES_CCA_H_

#include <cstddef>
#include <vector>

#include "sslforge/tensor/tensor.h"

namespace sslforge {

struct CcaResult {
  std::vector<double> correlations;  // descending, in [0, 1]
  std::size_t dx = 0, dy = 0, d = 0;
  std::vector<double> mean_x, mean_y;
  std::vector<double> proj_x;  // dx x d, row-major
  std::vector<double> proj_y;  // dy x d

  // (X - mean_x) proj_x
  Tensor project_x(const Tensor& x) const;
  Tensor project_y(const Tensor& y) const;
};

// Top-d canonical correlations from the singular values of
// Sx^{-1/2} Sxy Sy^{-1/2} (sample covariances, n - 1). Projected data has
// identity covariance and diagonal cross-covariance. A covariance whose
// smallest eigenvalue is below ridge * max(1, largest) is treated as singular
// and raises NumericalError.
CcaResult linear_cca(const Tensor& x, const Tensor& y, std::size_t d, double ridge = 1e-8);

struct DccaeTerms {
  Tensor total;
  Tensor correlation;  // -trace(Cov(U, V))
  Tensor penalty;      // weight * (||Cov(U) - I||_F^2 + ||Cov(V) - I||_F^2)
};

// Columns are centered internally.
DccaeTerms dccae_correlation_objective(const Tensor& u, const Tensor& v,
                                       double penalty_weight = 1.0);

}  // namespace sslforge

#endif  // SSLFORGE_LOSSES_CCA_H_
