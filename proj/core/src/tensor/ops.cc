#include "sslforge/tensor/ops.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "sslforge/common/error.h"

namespace sslforge {

using detail::make_result;
using detail::Node;

namespace {

// Gradient buffer of parent k, or nullptr when that parent is constant.
std::vector<double>* grad_of(Node& self, std::size_t k) {
  Node& p = *self.parents[k];
  if (!p.requires_grad) return nullptr;
  return &p.ensure_grad();
}

const std::vector<double>& value_of(Node& self, std::size_t k) {
  return self.parents[k]->value;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(fmt::format("{}: shapes {} and {} differ", op,
                                     shape_string(a.shape()),
                                     shape_string(b.shape())));
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw DimensionError(fmt::format("{}: expected a matrix, got {}", op,
                                     shape_string(a.shape())));
  }
}

// Elementwise unary op given f(x) and f'(x, y) where y = f(x).
template <typename F, typename DF>
Tensor unary(const Tensor& a, const char* op, F f, DF df) {
  std::vector<double> out(a.size());
  const auto& x = a.vec();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return make_result(a.shape(), std::move(out), op, {a}, [df](Node& self) {
    auto* g = grad_of(self, 0);
    if (!g) return;
    const auto& x = value_of(self, 0);
    for (std::size_t i = 0; i < g->size(); ++i) {
      (*g)[i] += self.grad[i] * df(x[i], self.value[i]);
    }
  });
}

}  // namespace

// --- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return make_result(a.shape(), std::move(out), "add", {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* g = grad_of(self, k)) {
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] - b[i];
  return make_result(a.shape(), std::move(out), "sub", {a, b}, [](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i];
    }
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return make_result(a.shape(), std::move(out), "mul", {a, b}, [](Node& self) {
    const auto& x = value_of(self, 0);
    const auto& y = value_of(self, 1);
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * y[i];
    }
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] * x[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] / b[i];
  return make_result(a.shape(), std::move(out), "div", {a, b}, [](Node& self) {
    const auto& y = value_of(self, 1);
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += self.grad[i] / y[i];
    }
    if (auto* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < g->size(); ++i) {
        (*g)[i] -= self.grad[i] * self.value[i] / y[i];
      }
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary(
      a, "scale", [s](double x) { return s * x; },
      [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      a, "add_scalar", [s](double x) { return x + s; },
      [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
  return unary(
      a, "square", [](double x) { return x * x; },
      [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
  return unary(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
  return unary(
      a, "softplus",
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x, double) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

// --- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result({}, {s}, "sum", {a}, [](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (double& v : *g) v += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw DimensionError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor row_sum(const Tensor& a) {
  require_matrix(a, "row_sum");
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[i] += a[i * d + j];
  }
  return make_result({n, 1}, std::move(out), "row_sum", {a}, [n, d](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) (*g)[i * d + j] += self.grad[i];
      }
    }
  });
}

Tensor col_sum(const Tensor& a) {
  require_matrix(a, "col_sum");
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[j] += a[i * d + j];
  }
  return make_result({1, d}, std::move(out), "col_sum", {a}, [n, d](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) (*g)[i * d + j] += self.grad[j];
      }
    }
  });
}

Tensor col_mean(const Tensor& a) {
  require_matrix(a, "col_mean");
  if (a.rows() == 0) throw DimensionError("col_mean of zero rows");
  return scale(col_sum(a), 1.0 / static_cast<double>(a.rows()));
}

// --- structure ------------------------------------------------------------

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[j * n + i] = a[i * d + j];
  }
  return make_result({d, n}, std::move(out), "transpose", {a}, [n, d](Node& self) {
    if (auto* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) (*g)[i * d + j] += self.grad[j * n + i];
      }
    }
  });
}

Tensor expand_rows(const Tensor& row, std::size_t n) {
  if (row.rank() != 2 || row.rows() != 1) {
    throw DimensionError("expand_rows expects 1 x d, got " +
                         shape_string(row.shape()));
  }
  const std::size_t d = row.cols();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(row.vec().begin(), row.vec().end(), out.begin() + i * d);
  }
  return make_result({n, d}, std::move(out), "expand_rows", {row},
                     [n, d](Node& self) {
                       if (auto* g = grad_of(self, 0)) {
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t j = 0; j < d; ++j) {
                             (*g)[j] += self.grad[i * d + j];
                           }
                         }
                       }
                     });
}

Tensor expand_cols(const Tensor& col, std::size_t m) {
  if (col.rank() != 2 || col.cols() != 1) {
    throw DimensionError("expand_cols expects n x 1, got " +
                         shape_string(col.shape()));
  }
  const std::size_t n = col.rows();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(out.begin() + i * m, out.begin() + (i + 1) * m, col[i]);
  }
  return make_result({n, m}, std::move(out), "expand_cols", {col},
                     [n, m](Node& self) {
                       if (auto* g = grad_of(self, 0)) {
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t j = 0; j < m; ++j) {
                             (*g)[i] += self.grad[i * m + j];
                           }
                         }
                       }
                     });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows of nothing");
  const std::size_t d = parts[0].cols();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || p.cols() != d) {
      throw DimensionError(fmt::format("concat_rows: part {} does not have {} columns",
                                       shape_string(p.shape()), d));
    }
    n += p.rows();
  }
  std::vector<double> out;
  out.reserve(n * d);
  for (const auto& p : parts) out.insert(out.end(), p.vec().begin(), p.vec().end());
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_result({n, d}, std::move(out), "concat_rows", std::move(parents),
                     [](Node& self) {
                       std::size_t offset = 0;
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         const std::size_t len = self.parents[k]->value.size();
                         if (auto* g = grad_of(self, k)) {
                           for (std::size_t i = 0; i < len; ++i) {
                             (*g)[i] += self.grad[offset + i];
                           }
                         }
                         offset += len;
                       }
                     });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_rows");
  if (begin > end || end > a.rows()) {
    throw DimensionError(fmt::format("slice_rows [{}, {}) out of range for {}",
                                     begin, end, shape_string(a.shape())));
  }
  const std::size_t d = a.cols();
  std::vector<double> out(a.vec().begin() + begin * d, a.vec().begin() + end * d);
  return make_result({end - begin, d}, std::move(out), "slice_rows", {a},
                     [begin, d](Node& self) {
                       if (auto* g = grad_of(self, 0)) {
                         for (std::size_t i = 0; i < self.grad.size(); ++i) {
                           (*g)[begin * d + i] += self.grad[i];
                         }
                       }
                     });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  require_matrix(a, "gather_rows");
  const std::size_t d = a.cols();
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> out(idx.size() * d);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= a.rows()) {
      throw DimensionError(fmt::format("gather_rows: index {} >= {}", idx[r], a.rows()));
    }
    std::copy_n(a.vec().begin() + idx[r] * d, d, out.begin() + r * d);
  }
  const std::size_t m = idx.size();
  return make_result({m, d}, std::move(out), "gather_rows", {a},
                     [idx = std::move(idx), d](Node& self) {
                       if (auto* g = grad_of(self, 0)) {
                         for (std::size_t r = 0; r < idx.size(); ++r) {
                           for (std::size_t j = 0; j < d; ++j) {
                             (*g)[idx[r] * d + j] += self.grad[r * d + j];
                           }
                         }
                       }
                     });
}

Tensor pick(const Tensor& m, std::span<const IndexPair> entries) {
  require_matrix(m, "pick");
  const std::size_t cols = m.cols();
  std::vector<std::size_t> flat;
  flat.reserve(entries.size());
  for (const auto& [i, j] : entries) {
    if (i >= m.rows() || j >= cols) {
      throw DimensionError(fmt::format("pick: ({}, {}) outside {}", i, j,
                                       shape_string(m.shape())));
    }
    flat.push_back(i * cols + j);
  }
  std::vector<double> out(flat.size());
  for (std::size_t p = 0; p < flat.size(); ++p) out[p] = m[flat[p]];
  const std::size_t count = flat.size();
  return make_result({count, 1}, std::move(out), "pick", {m},
                     [flat = std::move(flat)](Node& self) {
                       if (auto* g = grad_of(self, 0)) {
                         for (std::size_t p = 0; p < flat.size(); ++p) {
                           (*g)[flat[p]] += self.grad[p];
                         }
                       }
                     });
}

// --- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError(fmt::format("matmul: cannot multiply {} by {}",
                                     shape_string(a.shape()),
                                     shape_string(b.shape())));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const double* A = a.vec().data();
  const double* B = b.vec().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node& self) {
    const double* A = self.parents[0]->value.data();
    const double* B = self.parents[1]->value.data();
    const double* G = self.grad.data();
    if (auto* ga = grad_of(self, 0)) {
      // dA = G B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          const double* grow = G + i * n;
          const double* brow = B + p * n;
          for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
          (*ga)[i * k + p] += s;
        }
      }
    }
    if (auto* gb = grad_of(self, 1)) {
      // dB = A^T G
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          if (aip == 0.0) continue;
          double* out = gb->data() + p * n;
          for (std::size_t j = 0; j < n; ++j) out[j] += aip * grow[j];
        }
      }
    }
  });
}

Tensor l2_normalize_rows(const Tensor& z, double eps) {
  require_matrix(z, "l2_normalize_rows");
  if (!(eps > 0.0)) throw ParameterError("l2_normalize_rows: eps must be positive");
  const std::size_t n = z.rows(), d = z.cols();
  std::vector<double> denom(n);
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += z[i * d + j] * z[i * d + j];
    denom[i] = std::max(std::sqrt(s), eps);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = z[i * d + j] / denom[i];
  }
  return make_result(z.shape(), std::move(out), "l2_normalize_rows", {z},
                     [n, d, eps, denom = std::move(denom)](Node& self) {
                       auto* g = grad_of(self, 0);
                       if (!g) return;
                       for (std::size_t i = 0; i < n; ++i) {
                         const double* go = self.grad.data() + i * d;
                         const double* y = self.value.data() + i * d;
                         if (denom[i] > eps) {
                           // d(v/|v|) = (I - y y^T) / |v|
                           double dot = 0.0;
                           for (std::size_t j = 0; j < d; ++j) dot += go[j] * y[j];
                           for (std::size_t j = 0; j < d; ++j) {
                             (*g)[i * d + j] += (go[j] - dot * y[j]) / denom[i];
                           }
                         } else {
                           for (std::size_t j = 0; j < d; ++j) {
                             (*g)[i * d + j] += go[j] / eps;
                           }
                         }
                       }
                     });
}

Tensor softmax_rows(const Tensor& z, double tau) {
  require_matrix(z, "softmax_rows");
  if (!(tau > 0.0)) throw ParameterError("softmax_rows: tau must be positive");
  const std::size_t n = z.rows(), k = z.cols();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = z.vec().data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      out[i * k + j] = std::exp((row[j] - mx) / tau);
      s += out[i * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] /= s;
  }
  return make_result(z.shape(), std::move(out), "softmax_rows", {z},
                     [n, k, tau](Node& self) {
                       auto* g = grad_of(self, 0);
                       if (!g) return;
                       for (std::size_t i = 0; i < n; ++i) {
                         const double* p = self.value.data() + i * k;
                         const double* go = self.grad.data() + i * k;
                         double dot = 0.0;
                         for (std::size_t j = 0; j < k; ++j) dot += go[j] * p[j];
                         for (std::size_t j = 0; j < k; ++j) {
                           (*g)[i * k + j] += p[j] * (go[j] - dot) / tau;
                         }
                       }
                     });
}

Tensor log_softmax_rows(const Tensor& z, double tau) {
  require_matrix(z, "log_softmax_rows");
  if (!(tau > 0.0)) throw ParameterError("log_softmax_rows: tau must be positive");
  const std::size_t n = z.rows(), k = z.cols();
  std::vector<double> out(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = z.vec().data() + i * k;
    const double mx = *std::max_element(row, row + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp((row[j] - mx) / tau);
    const double lse = std::log(s);
    for (std::size_t j = 0; j < k; ++j) out[i * k + j] = (row[j] - mx) / tau - lse;
  }
  return make_result(z.shape(), std::move(out), "log_softmax_rows", {z},
                     [n, k, tau](Node& self) {
                       auto* g = grad_of(self, 0);
                       if (!g) return;
                       for (std::size_t i = 0; i < n; ++i) {
                         const double* ls = self.value.data() + i * k;
                         const double* go = self.grad.data() + i * k;
                         double total = 0.0;
                         for (std::size_t j = 0; j < k; ++j) total += go[j];
                         for (std::size_t j = 0; j < k; ++j) {
                           (*g)[i * k + j] += (go[j] - std::exp(ls[j]) * total) / tau;
                         }
                       }
                     });
}

Tensor masked_logsumexp_rows(const Tensor& s, std::span<const std::uint8_t> mask) {
  require_matrix(s, "masked_logsumexp_rows");
  const std::size_t n = s.rows(), m = s.cols();
  if (mask.size() != n * m) {
    throw DimensionError(fmt::format("masked_logsumexp_rows: mask has {} entries for {}",
                                     mask.size(), shape_string(s.shape())));
  }
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < m; ++j) {
      if (keep[i * m + j]) mx = std::max(mx, s[i * m + j]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw ContractError(fmt::format("masked_logsumexp_rows: row {} selects nothing", i));
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (keep[i * m + j]) acc += std::exp(s[i * m + j] - mx);
    }
    out[i] = mx + std::log(acc);
  }
  return make_result({n, 1}, std::move(out), "masked_logsumexp_rows", {s},
                     [n, m, keep = std::move(keep)](Node& self) {
                       auto* g = grad_of(self, 0);
                       if (!g) return;
                       const auto& x = value_of(self, 0);
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < m; ++j) {
                           if (!keep[i * m + j]) continue;
                           (*g)[i * m + j] +=
                               self.grad[i] * std::exp(x[i * m + j] - self.value[i]);
                         }
                       }
                     });
}

Tensor cosine_similarity_matrix(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw DimensionError(fmt::format("cosine_similarity_matrix: {} vs {}",
                                     shape_string(a.shape()),
                                     shape_string(b.shape())));
  }
  return matmul(l2_normalize_rows(a, 1e-12), transpose(l2_normalize_rows(b, 1e-12)));
}

Tensor pairwise_sq_dist(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw DimensionError(fmt::format("pairwise_sq_dist: {} vs {}",
                                     shape_string(a.shape()),
                                     shape_string(b.shape())));
  }
  const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = a[i * d + k] - b[j * d + k];
        s += diff * diff;
      }
      out[i * m + j] = s;
    }
  }
  return make_result({n, m}, std::move(out), "pairwise_sq_dist", {a, b},
                     [n, m, d](Node& self) {
                       const auto& A = value_of(self, 0);
                       const auto& B = value_of(self, 1);
                       auto* ga = grad_of(self, 0);
                       auto* gb = grad_of(self, 1);
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < m; ++j) {
                           const double go = 2.0 * self.grad[i * m + j];
                           if (go == 0.0) continue;
                           for (std::size_t k = 0; k < d; ++k) {
                             const double diff = A[i * d + k] - B[j * d + k];
                             if (ga) (*ga)[i * d + k] += go * diff;
                             if (gb) (*gb)[j * d + k] -= go * diff;
                           }
                         }
                       }
                     });
}

Tensor stop_gradient(const Tensor& t) { return t.detach(); }

// --- convolutional trunk ----------------------------------------------------

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w, o, k, stride, pad, ho, wo;
  std::size_t patch() const { return c * k * k; }
  std::size_t pixels() const { return ho * wo; }
};

// cols: (C*K*K) x (Ho*Wo) for sample `img` (C x H x W).
void im2col(const ConvGeometry& g, const double* img, double* cols) {
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* dst = cols + ((ch * g.k + ky) * g.k + kx) * g.pixels();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) &&
                                ix < static_cast<long>(g.w);
            dst[oy * g.wo + ox] = inside ? img[(ch * g.h + iy) * g.w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* cols, double* img) {
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* src = cols + ((ch * g.k + ky) * g.k + kx) * g.pixels();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            img[(ch * g.h + iy) * g.w + ix] += src[oy * g.wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride,
              std::size_t pad) {
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1) || w.dim(2) != w.dim(3)) {
    throw DimensionError(fmt::format("conv2d: input {} incompatible with kernel {}",
                                     shape_string(x.shape()), shape_string(w.shape())));
  }
  if (b.size() != w.dim(0)) {
    throw DimensionError(fmt::format("conv2d: bias {} for {} output channels",
                                     shape_string(b.shape()), w.dim(0)));
  }
  if (stride == 0) throw ParameterError("conv2d: stride must be positive");
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2), stride, pad, 0, 0};
  if (g.h + 2 * pad < g.k || g.w + 2 * pad < g.k) {
    throw DimensionError("conv2d: kernel larger than padded input");
  }
  g.ho = (g.h + 2 * pad - g.k) / stride + 1;
  g.wo = (g.w + 2 * pad - g.k) / stride + 1;
  const std::size_t P = g.pixels(), Q = g.patch();
  std::vector<double> out(g.n * g.o * P);
  std::vector<double> cols(Q * P);
  const double* W = w.vec().data();
  for (std::size_t s = 0; s < g.n; ++s) {
    im2col(g, x.vec().data() + s * g.c * g.h * g.w, cols.data());
    double* dst = out.data() + s * g.o * P;
    for (std::size_t o = 0; o < g.o; ++o) {
      double* orow = dst + o * P;
      std::fill(orow, orow + P, b[o]);
      for (std::size_t q = 0; q < Q; ++q) {
        const double wq = W[o * Q + q];
        const double* crow = cols.data() + q * P;
        for (std::size_t p = 0; p < P; ++p) orow[p] += wq * crow[p];
      }
    }
  }
  return make_result({g.n, g.o, g.ho, g.wo}, std::move(out), "conv2d", {x, w, b},
                     [g](Node& self) {
                       const std::size_t P = g.pixels(), Q = g.patch();
                       const auto& X = value_of(self, 0);
                       const auto& W = value_of(self, 1);
                       auto* gx = grad_of(self, 0);
                       auto* gw = grad_of(self, 1);
                       auto* gb = grad_of(self, 2);
                       std::vector<double> cols(Q * P);
                       std::vector<double> dcols(Q * P);
                       for (std::size_t s = 0; s < g.n; ++s) {
                         const double* go = self.grad.data() + s * g.o * P;
                         if (gb) {
                           for (std::size_t o = 0; o < g.o; ++o) {
                             double acc = 0.0;
                             for (std::size_t p = 0; p < P; ++p) acc += go[o * P + p];
                             (*gb)[o] += acc;
                           }
                         }
                         if (gw) {
                           im2col(g, X.data() + s * g.c * g.h * g.w, cols.data());
                           for (std::size_t o = 0; o < g.o; ++o) {
                             const double* grow = go + o * P;
                             for (std::size_t q = 0; q < Q; ++q) {
                               const double* crow = cols.data() + q * P;
                               double acc = 0.0;
                               for (std::size_t p = 0; p < P; ++p) acc += grow[p] * crow[p];
                               (*gw)[o * Q + q] += acc;
                             }
                           }
                         }
                         if (gx) {
                           std::fill(dcols.begin(), dcols.end(), 0.0);
                           for (std::size_t o = 0; o < g.o; ++o) {
                             const double* grow = go + o * P;
                             for (std::size_t q = 0; q < Q; ++q) {
                               const double wq = W[o * Q + q];
                               double* drow = dcols.data() + q * P;
                               for (std::size_t p = 0; p < P; ++p) drow[p] += wq * grow[p];
                             }
                           }
                           col2im(g, dcols.data(), gx->data() + s * g.c * g.h * g.w);
                         }
                       }
                     });
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.rank() != 4) {
    throw DimensionError("global_avg_pool expects N x C x H x W, got " +
                         shape_string(x.shape()));
  }
  const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  std::vector<double> out(n * c, 0.0);
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::size_t p = 0; p < hw; ++p) s += x[i * hw + p];
    out[i] = s / static_cast<double>(hw);
  }
  return make_result({n, c}, std::move(out), "global_avg_pool", {x},
                     [n, c, hw](Node& self) {
                       if (auto* g = grad_of(self, 0)) {
                         for (std::size_t i = 0; i < n * c; ++i) {
                           const double v = self.grad[i] / static_cast<double>(hw);
                           for (std::size_t p = 0; p < hw; ++p) (*g)[i * hw + p] += v;
                         }
                       }
                     });
}

}  // namespace sslforge
