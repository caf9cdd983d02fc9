#ifndef SSLFORGE_LOSSES_CONTRASTIVE_H_
#define SSLFORGE_LOSSES_CONTRASTIVE_H_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "sslforge/tensor/ops.h"
#include "sslforge/tensor/tensor.h"

// Losses over a batch Z (N x d) and an ordered positive-pair list P. Each loss
// is the sum over P as written; callers wanting a per-pair mean divide by |P|.
namespace sslforge {

using PairList = std::vector<IndexPair>;

// Throws DimensionError for out-of-range indices and ContractError for i == j.
void validate_pairs(std::span<const IndexPair> pairs, std::size_t n);

// Pairs (i, i + n) and (i + n, i) for two stacked views of n samples.
PairList two_view_pairs(std::size_t n);
// Every ordered pair of distinct views of the same sample, for `views` stacked
// blocks of n rows each.
PairList multi_view_pairs(std::size_t n, std::size_t views);
// partner[i] = j for the pair list of a batch where every row has exactly one
// positive partner. Throws ContractError otherwise.
std::vector<std::size_t> partner_map(std::span<const IndexPair> pairs, std::size_t n);

// sum_P ||z_j - z_i|| + sum_{i != j, (i,j) not in P} relu(m - ||z_i - z_j||)^2
Tensor contrastive_pair_loss(const Tensor& z, std::span<const IndexPair> pairs, double margin);

// -sum_P exp(-||z_i - z_j||^2) / sum_{k,l} exp(-||z_k - z_l||^2)
Tensor nca_loss(const Tensor& z, std::span<const IndexPair> pairs);

// sum_P sum_k relu(d(i,j) - d(i,k) + m) over k != i with (i,k) not in P.
// `squared` switches d to the squared Euclidean distance.
Tensor triplet_loss(const Tensor& z, std::span<const IndexPair> pairs, double margin,
                    bool squared = false);

// -sum_P log(e^<z_i,z_j> / sum_{(k,l) in P} e^<z_i,z_l>) + beta ||Z||_F^2
Tensor tuple_loss(const Tensor& z, std::span<const IndexPair> pairs, double beta);

// Softmax cross-entropy over cosine similarities divided by tau. The three
// variants differ only in the denominator of anchor i:
//   info_nce: all k;  nt_xent: k != i;  dcl: k != i and (i,k) not in P.
enum class InfoNceVariant { kInfoNce, kNtXent, kDcl };

Tensor info_nce(const Tensor& z, std::span<const IndexPair> pairs, double tau);
Tensor nt_xent(const Tensor& z, std::span<const IndexPair> pairs, double tau);
Tensor dcl_loss(const Tensor& z, std::span<const IndexPair> pairs, double tau);
Tensor info_nce_family(const Tensor& z, std::span<const IndexPair> pairs, double tau,
                       InfoNceVariant variant);

// Row i: sum over the variant's denominator set of e^{CoSim(z_i, z_k) / tau}.
std::vector<double> info_nce_denominators(const Tensor& z, std::span<const IndexPair> pairs,
                                          double tau, InfoNceVariant variant);

// Fixed-capacity FIFO of l2-normalized embedding rows. Rows carry no gradient.
class SupportQueue {
 public:
  SupportQueue(std::size_t capacity, std::size_t dim);

  // Appends the rows of z (normalized), evicting the oldest beyond capacity.
  void push(const Tensor& z);
  std::size_t size() const { return rows_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  bool empty() const { return rows_.empty(); }
  // Queue row with maximal cosine similarity to v; ties go to the oldest row.
  std::size_t nearest(std::span<const double> v) const;
  const std::vector<double>& row(std::size_t k) const { return rows_[k]; }
  // Nearest queue row for every row of z, stacked as a constant N x d tensor.
  Tensor nearest_rows(const Tensor& z) const;

 private:
  std::size_t capacity_;
  std::size_t dim_;
  std::deque<std::vector<double>> rows_;
};

// -sum_P log(e^{CoSim(NN(z_i), z_j)/tau} / sum_{(k,l) in P} e^{CoSim(NN(z_i), z_l)/tau})
// Throws ContractError when the queue is empty.
Tensor nnclr_loss(const Tensor& z, std::span<const IndexPair> pairs, const SupportQueue& queue,
                  double tau);

}  // namespace sslforge

#endif  // SSLFORGE_LOSSES_CONTRASTIVE_H_
