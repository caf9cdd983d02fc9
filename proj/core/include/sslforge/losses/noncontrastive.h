#ifndef SSLFORGE_LOSSES_NONCONTRASTIVE_H_
#define SSLFORGE_LOSSES_NONCONTRASTIVE_H_

#include <cstdint>
#include <span>
#include <vector>

#include "sslforge/tensor/tensor.h"

namespace sslforge {

// mean_i ||p_i / ||p_i|| - t_i / ||t_i||||^2. The target is detached.
Tensor byol_loss(const Tensor& pred, const Tensor& target);
// Average of byol_loss(p1, t2) and byol_loss(p2, t1).
Tensor byol_symmetric(const Tensor& pred1, const Tensor& pred2, const Tensor& target1,
                      const Tensor& target2);

// byol_loss(pred, stop_gradient(proj)).
Tensor simsiam_loss(const Tensor& pred, const Tensor& proj);
Tensor simsiam_symmetric(const Tensor& pred1, const Tensor& pred2, const Tensor& proj1,
                         const Tensor& proj2);

struct DinoTemperatures {
  double student = 0.1;
  double teacher = 0.05;
};

// -mean_i sum_k softmax((t_i - c) / tau_t)_k log softmax(s_i / tau_s)_k.
// The teacher side is a constant target; `center` has one entry per column.
Tensor dino_loss(const Tensor& student, const Tensor& teacher, std::span<const double> center,
                 DinoTemperatures temps = {});

struct VicRegWeights {
  double inv = 25.0;
  double var = 25.0;
  double cov = 1.0;
  double gamma = 1.0;
  double eps = 1e-4;

  void validate() const;
};

// Weighted terms; total = inv + var + cov.
struct VicRegTerms {
  Tensor total;
  Tensor inv;
  Tensor var;
  Tensor cov;
};

// inv: mean_i ||z1_i - z2_i||^2
// var: sum over branches of mean_d relu(gamma - sqrt(Var_d + eps))
// cov: sum over branches of (1/d) sum_{p != q} Cov_pq^2
// Variances and covariances use the unbiased (n - 1) estimator.
VicRegTerms vicreg_loss(const Tensor& z1, const Tensor& z2, const VicRegWeights& w = {});

struct BarlowTerms {
  Tensor total;
  Tensor diag;     // sum_p (C_pp - 1)^2
  Tensor offdiag;  // lambda sum_{p != q} C_pq^2
};

// C is the cross-correlation of the column-standardized branches (biased
// statistics, std floored at 1e-8).
BarlowTerms barlow_twins_loss(const Tensor& z1, const Tensor& z2, double lambda_offdiag = 5e-3);

// Mean squared error over entries with mask != 0; 0 when the mask is empty.
Tensor masked_recon_loss(const Tensor& pred, const Tensor& original,
                         std::span<const std::uint8_t> mask);

}  // namespace sslforge

#endif  // SSLFORGE_LOSSES_NONCONTRASTIVE_H_
