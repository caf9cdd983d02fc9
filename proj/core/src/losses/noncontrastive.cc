#include "sslforge/losses/noncontrastive.h"

#include <cmath>

#include <fmt/format.h>

#include "sslforge/common/error.h"
#include "sslforge/tensor/ops.h"

namespace sslforge {
namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape() || a.rank() != 2) {
    throw DimensionError(fmt::format("{}: branches must be matrices of equal shape", what));
  }
}

void require_rows(const Tensor& z, std::size_t n, const char* what) {
  if (z.rows() < n) throw DimensionError(fmt::format("{}: need at least {} rows", what, n));
}

Tensor centered(const Tensor& z) { return sub(z, expand_rows(col_mean(z), z.rows())); }

// 1 - I as a constant d x d tensor.
Tensor offdiag_mask(std::size_t d) {
  std::vector<double> m(d * d, 1.0);
  for (std::size_t k = 0; k < d; ++k) m[k * d + k] = 0.0;
  return Tensor({d, d}, std::move(m));
}

// Returns (inv-free) variance and covariance penalties of one branch.
std::pair<Tensor, Tensor> vicreg_branch(const Tensor& z, const VicRegWeights& w) {
  const double n = static_cast<double>(z.rows());
  const std::size_t d = z.cols();
  const Tensor c = centered(z);
  const Tensor var = scale(col_sum(square(c)), 1.0 / (n - 1.0));
  const Tensor hinge = relu(add_scalar(neg(sqrt(add_scalar(var, w.eps))), w.gamma));
  const Tensor cov = scale(matmul(transpose(c), c), 1.0 / (n - 1.0));
  const Tensor off = sum(square(mul(cov, offdiag_mask(d))));
  return {mean(hinge), scale(off, 1.0 / static_cast<double>(d))};
}

Tensor standardize(const Tensor& z) {
  const double n = static_cast<double>(z.rows());
  const Tensor c = centered(z);
  const Tensor sd = sqrt(add_scalar(scale(col_sum(square(c)), 1.0 / n), 1e-16));
  return div(c, expand_rows(sd, z.rows()));
}

}  // namespace

Tensor byol_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "byol_loss");
  const Tensor diff = sub(l2_normalize_rows(pred), l2_normalize_rows(stop_gradient(target)));
  return scale(sum(square(diff)), 1.0 / static_cast<double>(pred.rows()));
}

Tensor byol_symmetric(const Tensor& pred1, const Tensor& pred2, const Tensor& target1,
                      const Tensor& target2) {
  return scale(add(byol_loss(pred1, target2), byol_loss(pred2, target1)), 0.5);
}

Tensor simsiam_loss(const Tensor& pred, const Tensor& proj) {
  return byol_loss(pred, stop_gradient(proj));
}

Tensor simsiam_symmetric(const Tensor& pred1, const Tensor& pred2, const Tensor& proj1,
                         const Tensor& proj2) {
  return scale(add(simsiam_loss(pred1, proj2), simsiam_loss(pred2, proj1)), 0.5);
}

Tensor dino_loss(const Tensor& student, const Tensor& teacher, std::span<const double> center,
                 DinoTemperatures temps) {
  require_same_shape(student, teacher, "dino_loss");
  if (!(temps.student > 0.0) || !(temps.teacher > 0.0)) {
    throw ParameterError("dino_loss: temperatures must be positive");
  }
  if (center.size() != teacher.cols()) {
    throw DimensionError(fmt::format("dino_loss: center has {} entries for {} columns",
                                     center.size(), teacher.cols()));
  }
  const Tensor c = expand_rows(Tensor({1, center.size()}, {center.begin(), center.end()}),
                               teacher.rows());
  const Tensor target = softmax_rows(sub(teacher.detach(), c), temps.teacher);
  const Tensor log_p = log_softmax_rows(student, temps.student);
  return scale(sum(mul(target, log_p)), -1.0 / static_cast<double>(student.rows()));
}

void VicRegWeights::validate() const {
  if (inv < 0 || var < 0 || cov < 0 || eps < 0) {
    throw ParameterError("vicreg weights must be non-negative");
  }
  if (!(gamma > 0)) throw ParameterError("vicreg gamma must be positive");
}

VicRegTerms vicreg_loss(const Tensor& z1, const Tensor& z2, const VicRegWeights& w) {
  w.validate();
  require_same_shape(z1, z2, "vicreg_loss");
  require_rows(z1, 2, "vicreg_loss");
  const Tensor inv = scale(sum(square(sub(z1, z2))), w.inv / static_cast<double>(z1.rows()));
  const auto [var1, cov1] = vicreg_branch(z1, w);
  const auto [var2, cov2] = vicreg_branch(z2, w);
  const Tensor var = scale(add(var1, var2), w.var);
  const Tensor cov = scale(add(cov1, cov2), w.cov);
  return {add(add(inv, var), cov), inv, var, cov};
}

BarlowTerms barlow_twins_loss(const Tensor& z1, const Tensor& z2, double lambda_offdiag) {
  require_same_shape(z1, z2, "barlow_twins_loss");
  require_rows(z1, 2, "barlow_twins_loss");
  if (lambda_offdiag < 0) throw ParameterError("barlow lambda must be non-negative");
  const std::size_t d = z1.cols();
  const Tensor c = scale(matmul(transpose(standardize(z1)), standardize(z2)),
                         1.0 / static_cast<double>(z1.rows()));
  const Tensor eye = Tensor::eye(d);
  const Tensor diag = sum(square(mul(sub(c, eye), eye)));
  const Tensor off = scale(sum(square(mul(c, offdiag_mask(d)))), lambda_offdiag);
  return {add(diag, off), diag, off};
}

Tensor masked_recon_loss(const Tensor& pred, const Tensor& original,
                         std::span<const std::uint8_t> mask) {
  if (pred.shape() != original.shape() || mask.size() != pred.size()) {
    throw DimensionError("masked_recon_loss: prediction, original and mask sizes differ");
  }
  std::vector<double> weights(mask.size());
  std::size_t count = 0;
  for (std::size_t k = 0; k < mask.size(); ++k) {
    weights[k] = mask[k] ? 1.0 : 0.0;
    count += mask[k] ? 1 : 0;
  }
  if (count == 0) return Tensor::scalar(0.0);
  const Tensor w(pred.shape(), std::move(weights));
  return scale(sum(mul(square(sub(pred, original)), w)), 1.0 / static_cast<double>(count));
}

}  // namespace sslforge
