#ifndef SSLFORGE_TENSOR_OPS_H_
#define SSLFORGE_TENSOR_OPS_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "sslforge/tensor/tensor.h"

// Differentiable operations. Every function returns a new tensor; gradients
// flow to every argument that requires them unless noted otherwise.
namespace sslforge {

using IndexPair = std::pair<std::size_t, std::size_t>;

// --- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
// sqrt with the subgradient 0 at 0 (distances between coincident points).
Tensor sqrt(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// log(1 + e^x), stable for large |x|.
Tensor softplus(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// --- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// n x d -> n x 1
Tensor row_sum(const Tensor& a);
// n x d -> 1 x d
Tensor col_sum(const Tensor& a);
Tensor col_mean(const Tensor& a);

// --- structure ------------------------------------------------------------

Tensor transpose(const Tensor& a);
// 1 x d -> n x d by repetition.
Tensor expand_rows(const Tensor& row, std::size_t n);
// n x 1 -> n x m by repetition.
Tensor expand_cols(const Tensor& col, std::size_t m);
// Stacks matrices with equal column counts. Backward slices the gradient.
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
// Row selection with repetition allowed; backward scatter-adds.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);
// Entries M(i, j) for each pair, as a P x 1 column.
Tensor pick(const Tensor& m, std::span<const IndexPair> entries);

// --- linear algebra -------------------------------------------------------

// (m x k) x (k x n). Throws DimensionError naming both shapes on mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);

// Each row v replaced by v / max(||v||_2, eps).
Tensor l2_normalize_rows(const Tensor& z, double eps = 1e-12);

// Row-wise softmax of z / tau, stabilised by row-max subtraction.
Tensor softmax_rows(const Tensor& z, double tau = 1.0);
Tensor log_softmax_rows(const Tensor& z, double tau = 1.0);

// Row-wise log sum_{k : mask(i,k)} exp(s(i,k)). `mask` is row-major n x m
// with nonzero entries selecting terms; every row must select at least one.
Tensor masked_logsumexp_rows(const Tensor& s, std::span<const std::uint8_t> mask);

// (i, j) = <a_i, b_j> / (max(|a_i|, 1e-12) max(|b_j|, 1e-12)).
Tensor cosine_similarity_matrix(const Tensor& a, const Tensor& b);

// (i, j) = ||a_i - b_j||^2.
Tensor pairwise_sq_dist(const Tensor& a, const Tensor& b);

// Stop-gradient: identical value, nothing flows back to the argument.
Tensor stop_gradient(const Tensor& t);

// --- convolutional trunk ----------------------------------------------------

// x: N x C x H x W, w: O x C x K x K, b: 1 x O. Zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t stride, std::size_t pad);
// N x C x H x W -> N x C
Tensor global_avg_pool(const Tensor& x);

}  // namespace sslforge

#endif  // SSLFORGE_TENSOR_OPS_H_
