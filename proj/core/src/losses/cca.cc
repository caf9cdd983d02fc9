#include "sslforge/losses/cca.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "sslforge/common/error.h"
#include "sslforge/tensor/linalg.h"
#include "sslforge/tensor/ops.h"

namespace sslforge {
namespace {

using Mat = std::vector<double>;

std::vector<double> column_means(const Tensor& x) {
  std::vector<double> mu(x.cols(), 0.0);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t c = 0; c < x.cols(); ++c) mu[c] += x.at(i, c);
  }
  for (double& m : mu) m /= static_cast<double>(x.rows());
  return mu;
}

// (A - mu_a)^T (B - mu_b) / (n - 1), da x db.
Mat cross_cov(const Tensor& a, const std::vector<double>& mu_a, const Tensor& b,
              const std::vector<double>& mu_b) {
  const std::size_t n = a.rows(), da = a.cols(), db = b.cols();
  Mat out(da * db, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < da; ++p) {
      const double u = a.at(i, p) - mu_a[p];
      for (std::size_t q = 0; q < db; ++q) out[p * db + q] += u * (b.at(i, q) - mu_b[q]);
    }
  }
  for (double& v : out) v /= static_cast<double>(n - 1);
  return out;
}

Mat mat_mul(const Mat& a, const Mat& b, std::size_t n, std::size_t k, std::size_t m) {
  Mat out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < k; ++l) {
      const double v = a[i * k + l];
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += v * b[l * m + j];
    }
  }
  return out;
}

Mat mat_transpose(const Mat& a, std::size_t n, std::size_t m) {
  Mat out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = a[i * m + j];
  }
  return out;
}

// S^{-1/2} for symmetric positive definite S.
Mat inverse_sqrt(const Mat& s, std::size_t n, double ridge, const char* which) {
  const SymmetricEigen eig = symmetric_eigen(s, n);
  const double largest = std::max(1.0, eig.values.front());
  if (eig.values.back() < ridge * largest) {
    throw NumericalError(fmt::format("linear_cca: covariance of {} is singular (eigenvalue {})",
                                     which, eig.values.back()));
  }
  Mat out(n * n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double w = 1.0 / std::sqrt(eig.values[k]);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        out[i * n + j] += w * eig.vectors[i * n + k] * eig.vectors[j * n + k];
      }
    }
  }
  return out;
}

Tensor project(const Tensor& x, const std::vector<double>& mu, const std::vector<double>& proj,
               std::size_t d) {
  if (x.rank() != 2 || x.cols() != mu.size()) {
    throw DimensionError("cca projection: column count does not match the fitted data");
  }
  std::vector<double> c(x.size());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t p = 0; p < x.cols(); ++p) c[i * x.cols() + p] = x.at(i, p) - mu[p];
  }
  return Tensor({x.rows(), d}, mat_mul(c, proj, x.rows(), x.cols(), d));
}

}  // namespace

Tensor CcaResult::project_x(const Tensor& x) const { return project(x, mean_x, proj_x, d); }
Tensor CcaResult::project_y(const Tensor& y) const { return project(y, mean_y, proj_y, d); }

CcaResult linear_cca(const Tensor& x, const Tensor& y, std::size_t d, double ridge) {
  if (x.rank() != 2 || y.rank() != 2 || x.rows() != y.rows()) {
    throw DimensionError("linear_cca: X and Y must be matrices with the same number of rows");
  }
  const std::size_t n = x.rows(), dx = x.cols(), dy = y.cols();
  if (n <= std::max(dx, dy)) {
    throw DimensionError(fmt::format("linear_cca: need more than {} rows, got {}",
                                     std::max(dx, dy), n));
  }
  if (d == 0 || d > std::min(dx, dy)) {
    throw ParameterError(fmt::format("linear_cca: d must be in [1, {}]", std::min(dx, dy)));
  }
  CcaResult r{.dx = dx, .dy = dy, .d = d, .mean_x = column_means(x), .mean_y = column_means(y)};
  const Mat wx = inverse_sqrt(cross_cov(x, r.mean_x, x, r.mean_x), dx, ridge, "X");
  const Mat wy = inverse_sqrt(cross_cov(y, r.mean_y, y, r.mean_y), dy, ridge, "Y");
  const Mat sxy = cross_cov(x, r.mean_x, y, r.mean_y);
  const Mat t = mat_mul(mat_mul(wx, sxy, dx, dx, dy), wy, dx, dy, dy);  // dx x dy

  // Left singular vectors from T T^T; right ones as T^T u / sigma.
  const SymmetricEigen left = symmetric_eigen(mat_mul(t, mat_transpose(t, dx, dy), dx, dy, dx), dx);
  const Mat tt = mat_transpose(t, dx, dy);
  Mat u(dx * d), v(dy * d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double sigma = std::sqrt(std::max(0.0, left.values[k]));
    r.correlations.push_back(std::clamp(sigma, 0.0, 1.0));
    for (std::size_t i = 0; i < dx; ++i) u[i * d + k] = left.vectors[i * dx + k];
    std::vector<double> col(dy, 0.0);
    for (std::size_t j = 0; j < dy; ++j) {
      for (std::size_t i = 0; i < dx; ++i) col[j] += tt[j * dx + i] * left.vectors[i * dx + k];
    }
    // Orthonormalize against earlier columns; covers sigma ~ 0.
    for (std::size_t attempt = 0; attempt <= dy; ++attempt) {
      if (attempt > 0) {
        col.assign(dy, 0.0);
        col[attempt - 1] = 1.0;
      }
      for (std::size_t prev = 0; prev < k; ++prev) {
        double dot = 0.0;
        for (std::size_t j = 0; j < dy; ++j) dot += col[j] * v[j * d + prev];
        for (std::size_t j = 0; j < dy; ++j) col[j] -= dot * v[j * d + prev];
      }
      double norm = 0.0;
      for (double c : col) norm += c * c;
      norm = std::sqrt(norm);
      if (norm > (attempt == 0 ? 1e-10 : 1e-6)) {
        for (std::size_t j = 0; j < dy; ++j) v[j * d + k] = col[j] / norm;
        break;
      }
    }
  }
  r.proj_x = mat_mul(wx, u, dx, dx, d);
  r.proj_y = mat_mul(wy, v, dy, dy, d);
  return r;
}

DccaeTerms dccae_correlation_objective(const Tensor& u, const Tensor& v, double penalty_weight) {
  if (u.shape() != v.shape() || u.rank() != 2 || u.rows() < 2) {
    throw DimensionError("dccae objective: U and V must be equal-shape matrices with n >= 2");
  }
  const std::size_t n = u.rows(), d = u.cols();
  const double inv = 1.0 / static_cast<double>(n - 1);
  const Tensor cu = sub(u, expand_rows(col_mean(u), n));
  const Tensor cv = sub(v, expand_rows(col_mean(v), n));
  const Tensor eye = Tensor::eye(d);
  const Tensor corr = neg(sum(mul(scale(matmul(transpose(cu), cv), inv), eye)));
  const Tensor pen_u = sum(square(sub(scale(matmul(transpose(cu), cu), inv), eye)));
  const Tensor pen_v = sum(square(sub(scale(matmul(transpose(cv), cv), inv), eye)));
  const Tensor penalty = scale(add(pen_u, pen_v), penalty_weight);
  return {add(corr, penalty), corr, penalty};
}

}  // namespace sslforge
