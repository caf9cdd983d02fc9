#ifndef SSLFORGE_EVAL_SPECTRUM_H_
#define SSLFORGE_EVAL_SPECTRUM_H_

#include <cstddef>
#include <span>
#include <vector>

#include "sslforge/tensor/tensor.h"

namespace sslforge {

// exp(-sum_k p_k log p_k) with p_k = sigma_k / ||sigma||_1 + eps and
// 0 log 0 = 0. Throws DataError when every singular value is zero.
double rankme(const Tensor& z, double eps = 1e-7);
double rankme_from_singular_values(std::span<const double> sigma, double eps = 1e-7);

// Negated least-squares slope of log sigma_k against log k for 1-based k in
// [first, last]. last = 0 means min(n, d) / 2 of the spectrum. Needs at least
// 8 indices in range and positive values there (DataError otherwise).
double alpha_req(std::span<const double> sigma, std::size_t first = 2, std::size_t last = 0);
double alpha_req(const Tensor& z, std::size_t first = 2, std::size_t last = 0);

// Count of sigma_k > sigma_1 * max(n, d) * 1e-12.
std::size_t numeric_rank(std::span<const double> sigma, std::size_t n, std::size_t d);

struct SpectrumReport {
  std::vector<double> singular_values;
  double rankme = 0.0;
  double alpha = 0.0;  // NaN when the spectrum is too short or has zeros in range
  std::size_t numeric_rank = 0;
};

SpectrumReport spectrum_report(const Tensor& z, double eps = 1e-7);

}  // namespace sslforge

#endif  // SSLFORGE_EVAL_SPECTRUM_H_
