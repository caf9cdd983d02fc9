#include "sslforge/losses/contrastive.h"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "sslforge/common/error.h"

namespace sslforge {
namespace {

// N x N membership table of P.
std::vector<std::uint8_t> pair_table(std::span<const IndexPair> pairs, std::size_t n) {
  std::vector<std::uint8_t> table(n * n, 0);
  for (const auto& [i, j] : pairs) table[i * n + j] = 1;
  return table;
}

// ||z_a - z_b|| (or its square) for each (a, b), as a column.
Tensor row_distances(const Tensor& z, const std::vector<std::size_t>& a,
                     const std::vector<std::size_t>& b, bool squared) {
  const Tensor sq = row_sum(square(sub(gather_rows(z, a), gather_rows(z, b))));
  return squared ? sq : sqrt(sq);
}

// Column of log sum_l w_l e^{logits(i, l)}, where w_l counts the pairs of P
// whose second element is l.
Tensor partner_weighted_lse(const Tensor& logits, std::span<const IndexPair> pairs) {
  const std::size_t n = logits.rows(), m = logits.cols();
  std::vector<double> count(m, 0.0);
  for (const auto& pr : pairs) count[pr.second] += 1.0;
  std::vector<double> offset(n * m, 0.0);
  std::vector<std::uint8_t> mask(n * m, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < m; ++l) {
      if (count[l] > 0.0) {
        offset[i * m + l] = std::log(count[l]);
        mask[i * m + l] = 1;
      }
    }
  }
  return masked_logsumexp_rows(add(logits, Tensor({n, m}, std::move(offset))), mask);
}

std::vector<IndexPair> anchor_entries(std::span<const IndexPair> pairs) {
  std::vector<IndexPair> out;
  out.reserve(pairs.size());
  for (const auto& pr : pairs) out.emplace_back(pr.first, 0);
  return out;
}

void require_positive(double v, const char* what) {
  if (!(v > 0.0)) throw ParameterError(fmt::format("{} must be positive, got {}", what, v));
}

std::vector<std::uint8_t> denominator_mask(std::span<const IndexPair> pairs, std::size_t n,
                                           InfoNceVariant variant) {
  std::vector<std::uint8_t> mask(n * n, 1);
  if (variant == InfoNceVariant::kInfoNce) return mask;
  std::vector<std::uint8_t> anchor(n, 0);
  for (const auto& pr : pairs) anchor[pr.first] = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (anchor[i]) mask[i * n + i] = 0;
  }
  if (variant == InfoNceVariant::kDcl) {
    for (const auto& [i, j] : pairs) mask[i * n + j] = 0;
  }
  return mask;
}

}  // namespace

void validate_pairs(std::span<const IndexPair> pairs, std::size_t n) {
  for (const auto& [i, j] : pairs) {
    if (i >= n || j >= n) {
      throw DimensionError(fmt::format("pair ({}, {}) out of range for batch of {}", i, j, n));
    }
    if (i == j) throw ContractError(fmt::format("pair ({}, {}) pairs a row with itself", i, j));
  }
}

PairList two_view_pairs(std::size_t n) { return multi_view_pairs(n, 2); }

PairList multi_view_pairs(std::size_t n, std::size_t views) {
  PairList out;
  for (std::size_t a = 0; a < views; ++a) {
    for (std::size_t b = 0; b < views; ++b) {
      if (a == b) continue;
      for (std::size_t i = 0; i < n; ++i) out.emplace_back(a * n + i, b * n + i);
    }
  }
  return out;
}

std::vector<std::size_t> partner_map(std::span<const IndexPair> pairs, std::size_t n) {
  validate_pairs(pairs, n);
  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> partner(n, kNone);
  for (const auto& [i, j] : pairs) {
    if (partner[i] != kNone) {
      throw ContractError(fmt::format("row {} has more than one positive partner", i));
    }
    partner[i] = j;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (partner[i] == kNone) throw ContractError(fmt::format("row {} has no partner", i));
  }
  return partner;
}

Tensor contrastive_pair_loss(const Tensor& z, std::span<const IndexPair> pairs, double margin) {
  require_positive(margin, "contrastive margin");
  const std::size_t n = z.rows();
  validate_pairs(pairs, n);
  const auto table = pair_table(pairs, n);
  std::vector<std::size_t> pi, pj, ni, nj;
  for (const auto& [i, j] : pairs) {
    pi.push_back(i);
    pj.push_back(j);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && !table[i * n + j]) {
        ni.push_back(i);
        nj.push_back(j);
      }
    }
  }
  Tensor loss = Tensor::scalar(0.0);
  if (!pi.empty()) loss = add(loss, sum(row_distances(z, pj, pi, false)));
  if (!ni.empty()) {
    const Tensor gap = relu(add_scalar(neg(row_distances(z, ni, nj, false)), margin));
    loss = add(loss, sum(square(gap)));
  }
  return loss;
}

Tensor nca_loss(const Tensor& z, std::span<const IndexPair> pairs) {
  const std::size_t n = z.rows();
  if (n < 2) throw ContractError("nca_loss needs at least 2 samples");
  validate_pairs(pairs, n);
  const Tensor e = exp(neg(pairwise_sq_dist(z, z)));
  return neg(div(sum(pick(e, pairs)), sum(e)));
}

Tensor triplet_loss(const Tensor& z, std::span<const IndexPair> pairs, double margin,
                    bool squared) {
  require_positive(margin, "triplet margin");
  const std::size_t n = z.rows();
  validate_pairs(pairs, n);
  const auto table = pair_table(pairs, n);
  std::vector<std::size_t> anchor, positive, negative;
  for (const auto& [i, j] : pairs) {
    for (std::size_t k = 0; k < n; ++k) {
      if (k == i || table[i * n + k]) continue;
      anchor.push_back(i);
      positive.push_back(j);
      negative.push_back(k);
    }
  }
  if (anchor.empty()) return Tensor::scalar(0.0);
  const Tensor d_pos = row_distances(z, anchor, positive, squared);
  const Tensor d_neg = row_distances(z, anchor, negative, squared);
  return sum(relu(add_scalar(sub(d_pos, d_neg), margin)));
}

Tensor tuple_loss(const Tensor& z, std::span<const IndexPair> pairs, double beta) {
  if (!(beta >= 0.0)) throw ParameterError("tuple_loss: beta must be non-negative");
  validate_pairs(pairs, z.rows());
  const Tensor penalty = scale(sum(square(z)), beta);
  if (pairs.empty()) return penalty;
  const Tensor g = matmul(z, transpose(z));
  const Tensor lse = partner_weighted_lse(g, pairs);
  const auto anchors = anchor_entries(pairs);
  return add(sub(sum(pick(lse, anchors)), sum(pick(g, pairs))), penalty);
}

Tensor info_nce_family(const Tensor& z, std::span<const IndexPair> pairs, double tau,
                       InfoNceVariant variant) {
  require_positive(tau, "temperature");
  const std::size_t n = z.rows();
  validate_pairs(pairs, n);
  if (pairs.empty()) return Tensor::scalar(0.0);
  const Tensor s = scale(cosine_similarity_matrix(z, z), 1.0 / tau);
  const Tensor lse = masked_logsumexp_rows(s, denominator_mask(pairs, n, variant));
  return sub(sum(pick(lse, anchor_entries(pairs))), sum(pick(s, pairs)));
}

Tensor info_nce(const Tensor& z, std::span<const IndexPair> pairs, double tau) {
  return info_nce_family(z, pairs, tau, InfoNceVariant::kInfoNce);
}

Tensor nt_xent(const Tensor& z, std::span<const IndexPair> pairs, double tau) {
  return info_nce_family(z, pairs, tau, InfoNceVariant::kNtXent);
}

Tensor dcl_loss(const Tensor& z, std::span<const IndexPair> pairs, double tau) {
  return info_nce_family(z, pairs, tau, InfoNceVariant::kDcl);
}

std::vector<double> info_nce_denominators(const Tensor& z, std::span<const IndexPair> pairs,
                                          double tau, InfoNceVariant variant) {
  require_positive(tau, "temperature");
  const std::size_t n = z.rows();
  validate_pairs(pairs, n);
  const Tensor s = cosine_similarity_matrix(z.detach(), z.detach());
  const auto mask = denominator_mask(pairs, n, variant);
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      if (mask[i * n + k]) out[i] += std::exp(s.at(i, k) / tau);
    }
  }
  return out;
}

SupportQueue::SupportQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim) {
  if (capacity == 0 || dim == 0) throw ParameterError("support queue needs positive size");
}

void SupportQueue::push(const Tensor& z) {
  if (z.rank() != 2 || z.cols() != dim_) {
    throw DimensionError(fmt::format("queue of width {} cannot take {}", dim_,
                                     shape_string(z.shape())));
  }
  const Tensor normed = l2_normalize_rows(z.detach());
  for (std::size_t i = 0; i < normed.rows(); ++i) {
    const auto v = normed.values().subspan(i * dim_, dim_);
    rows_.emplace_back(v.begin(), v.end());
    if (rows_.size() > capacity_) rows_.pop_front();
  }
}

std::size_t SupportQueue::nearest(std::span<const double> v) const {
  if (rows_.empty()) throw ContractError("nearest neighbour in an empty support queue");
  // Queue rows are unit vectors, so the dot product ranks by cosine.
  std::size_t best = 0;
  double best_dot = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < rows_.size(); ++k) {
    double dot = 0.0;
    for (std::size_t c = 0; c < dim_; ++c) dot += rows_[k][c] * v[c];
    if (dot > best_dot) {
      best_dot = dot;
      best = k;
    }
  }
  return best;
}

Tensor SupportQueue::nearest_rows(const Tensor& z) const {
  const std::size_t n = z.rows();
  std::vector<double> out;
  out.reserve(n * dim_);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = rows_[nearest(z.values().subspan(i * dim_, dim_))];
    out.insert(out.end(), r.begin(), r.end());
  }
  return Tensor({n, dim_}, std::move(out));
}

Tensor nnclr_loss(const Tensor& z, std::span<const IndexPair> pairs, const SupportQueue& queue,
                  double tau) {
  require_positive(tau, "temperature");
  if (queue.empty()) throw ContractError("nnclr_loss needs a non-empty support queue");
  validate_pairs(pairs, z.rows());
  if (pairs.empty()) return Tensor::scalar(0.0);
  const Tensor nn = queue.nearest_rows(z);
  const Tensor c = scale(cosine_similarity_matrix(nn, z), 1.0 / tau);
  const Tensor lse = partner_weighted_lse(c, pairs);
  return sub(sum(pick(lse, anchor_entries(pairs))), sum(pick(c, pairs)));
}

}  // namespace sslforge
