#ifndef SSLFORGE_LOSSES_NCE_H_
#define SSLFORGE_LOSSES_NCE_H_

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "sslforge/tensor/tensor.h"

namespace sslforge {

// Unnormalized 1-D log-quadratic density: log f(v) = t0 + t1 v + t2 v^2, with
// the separate learnable log-normalizer c.
struct NceModel {
  std::array<double, 3> theta{0.0, 0.0, 0.0};
  double c = 0.0;

  double log_f(double v) const { return theta[0] + v * (theta[1] + v * theta[2]); }
  double log_density(double v) const { return log_f(v) + c; }
};

struct NceFitOptions {
  std::size_t steps = 5000;
  double lr = 0.01;
  // Prior probability of the data class; eta = (1 - s) / s.
  double s = 0.5;
};

struct NceFitResult {
  NceModel model;
  double eta = 1.0;
  double final_loss = 0.0;
};

double nce_eta(double s);

// Logistic NLL of data-vs-noise classification with posterior
// P(T=1 | v) = f e^c / (f e^c + eta p_noise(v)):
//   s mean_data softplus(-G) + (1 - s) mean_noise softplus(G),
//   G(v) = log f(v) + c - log eta - log p_noise(v).
// `params` is a 1 x 4 tensor (t0, t1, t2, c). Throws ContractError if the
// noise density is zero at any sample.
Tensor nce_objective(const Tensor& params, std::span<const double> data,
                     std::span<const double> noise,
                     const std::function<double(double)>& noise_log_density, double s);

// Minimizes nce_objective with Adam from `init`.
NceFitResult nce_binary_fit(std::span<const double> data, std::span<const double> noise,
                            const std::function<double(double)>& noise_log_density,
                            const NceFitOptions& options, NceModel init = {});

}  // namespace sslforge

#endif  // SSLFORGE_LOSSES_NCE_H_
