#include "sslforge/eval/spectrum.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "sslforge/common/error.h"
#include "sslforge/tensor/linalg.h"

namespace sslforge {

double rankme_from_singular_values(std::span<const double> sigma, double eps) {
  if (eps < 0.0) throw ParameterError("rankme: eps must be non-negative");
  double l1 = 0.0;
  for (double s : sigma) l1 += std::abs(s);
  if (!(l1 > 0.0)) throw DataError("rankme: embedding matrix is all zeros");
  double entropy = 0.0;
  for (double s : sigma) {
    const double p = std::abs(s) / l1 + eps;
    if (p > 0.0) entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

double rankme(const Tensor& z, double eps) {
  return rankme_from_singular_values(svd_values(z), eps);
}

double alpha_req(std::span<const double> sigma, std::size_t first, std::size_t last) {
  if (last == 0) last = sigma.size() / 2;
  if (first == 0 || last > sigma.size() || last < first || last - first + 1 < 8) {
    throw DataError(fmt::format("alpha_req: fit range [{}, {}] over {} values needs 8 indices",
                                first, last, sigma.size()));
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(last - first + 1);
  for (std::size_t k = first; k <= last; ++k) {
    const double s = sigma[k - 1];
    if (!(s > 0.0)) throw DataError("alpha_req: zero singular value in the fit range");
    const double x = std::log(static_cast<double>(k)), y = std::log(s);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return -(m * sxy - sx * sy) / (m * sxx - sx * sx);
}

double alpha_req(const Tensor& z, std::size_t first, std::size_t last) {
  return alpha_req(svd_values(z), first, last);
}

std::size_t numeric_rank(std::span<const double> sigma, std::size_t n, std::size_t d) {
  if (sigma.empty()) return 0;
  const double cut = sigma.front() * static_cast<double>(std::max(n, d)) * 1e-12;
  return static_cast<std::size_t>(
      std::count_if(sigma.begin(), sigma.end(), [&](double s) { return s > cut; }));
}

SpectrumReport spectrum_report(const Tensor& z, double eps) {
  SpectrumReport r;
  r.singular_values = svd_values(z);
  r.rankme = rankme_from_singular_values(r.singular_values, eps);
  r.numeric_rank = numeric_rank(r.singular_values, z.rows(), z.cols());
  try {
    r.alpha = alpha_req(r.singular_values);
  } catch (const DataError&) {
    r.alpha = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

}  // namespace sslforge
