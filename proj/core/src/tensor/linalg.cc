#include "sslforge/tensor/linalg.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "sslforge/common/error.h"

namespace sslforge {

SymmetricEigen symmetric_eigen(const std::vector<double>& a, std::size_t n,
                               std::size_t max_sweeps) {
  if (a.size() != n * n) throw DimensionError("symmetric_eigen: buffer is not n x n");
  std::vector<double> A(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) A[i * n + j] = A[j * n + i] = a[i * n + j];
  }
  std::vector<double> V(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) V[i * n + i] = 1.0;

  double frob = 0.0;
  for (double v : A) frob += v * v;
  const double tol = 1e-12 * std::max(1.0, std::sqrt(frob));

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * A[i * n + j] * A[i * n + j];
    }
    return std::sqrt(s);
  };

  std::size_t sweep = 0;
  for (; sweep < max_sweeps && off_norm() >= tol; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = A[p * n + q];
        if (apq == 0.0) continue;
        const double app = A[p * n + p], aqq = A[q * n + q];
        // Rotation angle that zeroes A(p, q) (Golub & Van Loan 8.5.2).
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = A[k * n + p], akq = A[k * n + q];
          A[k * n + p] = c * akp - s * akq;
          A[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = A[p * n + k], aqk = A[q * n + k];
          A[p * n + k] = c * apk - s * aqk;
          A[q * n + k] = s * apk + c * aqk;
        }
        A[p * n + q] = A[q * n + p] = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = V[k * n + p], vkq = V[k * n + q];
          V[k * n + p] = c * vkp - s * vkq;
          V[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return A[x * n + x] > A[y * n + y];
  });
  SymmetricEigen out;
  out.n = n;
  out.sweeps = sweep;
  out.values.resize(n);
  out.vectors.resize(n * n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = A[order[k] * n + order[k]];
    for (std::size_t i = 0; i < n; ++i) out.vectors[i * n + k] = V[i * n + order[k]];
  }
  return out;
}

std::vector<double> gram_matrix(const Tensor& m, bool rows_gram) {
  const std::size_t n = m.rows(), d = m.cols();
  const auto& x = m.vec();
  if (rows_gram) {
    // M M^T, n x n
    std::vector<double> g(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < d; ++k) s += x[i * d + k] * x[j * d + k];
        g[i * n + j] = g[j * n + i] = s;
      }
    }
    return g;
  }
  // M^T M, d x d
  std::vector<double> g(d * d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.data() + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      const double xi = row[i];
      if (xi == 0.0) continue;
      for (std::size_t j = i; j < d; ++j) g[i * d + j] += xi * row[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) g[j * d + i] = g[i * d + j];
  }
  return g;
}

std::vector<double> svd_values(const Tensor& m) {
  if (m.rank() != 2) throw DimensionError("svd_values expects a matrix");
  for (double v : m.values()) {
    if (!std::isfinite(v)) throw DataError("svd_values: input contains NaN or Inf");
  }
  const std::size_t n = m.rows(), d = m.cols();
  const std::size_t k = std::min(n, d), len = std::max(n, d);
  if (k == 0) return {};
  // One-sided Jacobi on the k vectors of length len (columns if n >= d).
  std::vector<double> a(k * len);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      if (n >= d) {
        a[j * len + i] = m.at(i, j);
      } else {
        a[i * len + j] = m.at(i, j);
      }
    }
  }
  for (std::size_t sweep = 0; sweep < 100; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < k; ++p) {
      for (std::size_t q = p + 1; q < k; ++q) {
        double* x = &a[p * len];
        double* y = &a[q * len];
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          alpha += x[i] * x[i];
          beta += y[i] * y[i];
          gamma += x[i] * y[i];
        }
        if (gamma == 0.0 || std::abs(gamma) <= 1e-15 * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double c = 1.0 / std::hypot(1.0, t), s = c * t;
        for (std::size_t i = 0; i < len; ++i) {
          const double xi = x[i], yi = y[i];
          x[i] = c * xi - s * yi;
          y[i] = s * xi + c * yi;
        }
      }
    }
    if (!rotated) break;
  }
  std::vector<double> sigma(k);
  for (std::size_t j = 0; j < k; ++j) {
    double norm = 0.0;
    for (std::size_t i = 0; i < len; ++i) norm += a[j * len + i] * a[j * len + i];
    sigma[j] = std::sqrt(norm);
  }
  std::sort(sigma.begin(), sigma.end(), std::greater<>());
  return sigma;
}

}  // namespace sslforge
