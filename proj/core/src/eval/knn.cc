#include "sslforge/eval/knn.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "sslforge/common/error.h"

namespace sslforge {
namespace {

std::vector<double> normalized_rows(const Tensor& z) {
  std::vector<double> out(z.vec());
  const std::size_t d = z.cols();
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double norm = 0.0;
    for (std::size_t c = 0; c < d; ++c) norm += out[i * d + c] * out[i * d + c];
    norm = std::max(std::sqrt(norm), 1e-12);
    for (std::size_t c = 0; c < d; ++c) out[i * d + c] /= norm;
  }
  return out;
}

}  // namespace

double accuracy(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw DimensionError("accuracy: prediction and label counts differ or are empty");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

KnnResult knn_classify(const Tensor& train, std::span<const Label> train_labels,
                       const Tensor& query, std::span<const Label> query_labels,
                       const KnnOptions& options) {
  if (train.rank() != 2 || query.rank() != 2 || train.cols() != query.cols()) {
    throw DimensionError("knn: train and query must be matrices of equal width");
  }
  if (train_labels.size() != train.rows()) throw DimensionError("knn: one label per train row");
  if (options.k == 0 || options.k > train.rows()) {
    throw ParameterError(fmt::format("knn: k = {} outside [1, {}]", options.k, train.rows()));
  }
  if (!(options.temperature > 0.0)) throw ParameterError("knn: temperature must be positive");
  const std::size_t n = train.rows(), d = train.cols();
  const Label classes = *std::max_element(train_labels.begin(), train_labels.end()) + 1;
  const std::vector<double> a = normalized_rows(train), b = normalized_rows(query);

  KnnResult result;
  std::vector<double> sim(n);
  std::vector<std::size_t> order(n);
  std::vector<double> score(classes);
  for (std::size_t q = 0; q < query.rows(); ++q) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += a[i * d + c] * b[q * d + c];
      sim[i] = s;
    }
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(options.k),
                      order.end(), [&](std::size_t x, std::size_t y) {
                        return sim[x] > sim[y] || (sim[x] == sim[y] && x < y);
                      });
    std::fill(score.begin(), score.end(), 0.0);
    for (std::size_t r = 0; r < options.k; ++r) {
      const std::size_t i = order[r];
      score[train_labels[i]] += options.mode == KnnMode::kMajority
                                    ? 1.0
                                    : std::exp((sim[i] - 1.0) / options.temperature);
    }
    result.predictions.push_back(
        static_cast<Label>(std::max_element(score.begin(), score.end()) - score.begin()));
  }
  result.accuracy = query_labels.empty() ? std::numeric_limits<double>::quiet_NaN()
                                         : accuracy(result.predictions, query_labels);
  return result;
}

}  // namespace sslforge
