#ifndef SSLFORGE_EVAL_KNN_H_
#define SSLFORGE_EVAL_KNN_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sslforge/tensor/tensor.h"

namespace sslforge {

using Label = std::uint16_t;

enum class KnnMode { kMajority, kWeighted };

struct KnnOptions {
  std::size_t k = 20;
  double temperature = 0.07;
  KnnMode mode = KnnMode::kWeighted;
};

struct KnnResult {
  std::vector<Label> predictions;
  double accuracy = 0.0;  // NaN without query labels
};

// Cosine-similarity neighbours on l2-normalized rows. Majority counts votes;
// weighted sums e^{sim / T} per class. Ties in similarity keep the lower
// training index; ties in class score go to the smallest class.
KnnResult knn_classify(const Tensor& train, std::span<const Label> train_labels,
                       const Tensor& query, std::span<const Label> query_labels,
                       const KnnOptions& options = {});

double accuracy(std::span<const Label> predicted, std::span<const Label> truth);

}  // namespace sslforge

#endif  // SSLFORGE_EVAL_KNN_H_
