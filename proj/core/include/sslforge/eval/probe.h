#ifndef SSLFORGE_EVAL_PROBE_H_
#define SSLFORGE_EVAL_PROBE_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sslforge/eval/knn.h"
#include "sslforge/models/encoder.h"
#include "sslforge/models/params.h"
#include "sslforge/optim/optimizer.h"
#include "sslforge/tensor/tensor.h"

namespace sslforge {

struct ProbeOptions {
  std::size_t epochs = 100;
  double lr = 1e-2;
  double weight_decay = 0.0;
  std::size_t hidden = 64;  // MLP probe only
  bool standardize = true;  // with training-set statistics
  std::uint64_t seed = 0;
};

struct ProbeCurve {
  // Validation accuracy before training and after each epoch (epochs + 1).
  std::vector<double> val_accuracy;
  double best = 0.0;
  std::size_t best_epoch = 0;
  double final = 0.0;
};

// Multinomial logistic regression, zero-initialized, full-batch AdamW steps.
// Features are detached. Argmax ties go to the smallest class.
ProbeCurve linear_probe(const Tensor& train, std::span<const Label> train_labels,
                        const Tensor& val, std::span<const Label> val_labels,
                        const ProbeOptions& options = {});

// Two-layer ReLU head (hidden width `options.hidden`, Glorot init from seed).
ProbeCurve mlp_probe(const Tensor& train, std::span<const Label> train_labels, const Tensor& val,
                     std::span<const Label> val_labels, const ProbeOptions& options = {});

std::vector<Label> argmax_rows(const Tensor& logits);

// Mean cross-entropy of logits against labels.
Tensor cross_entropy(const Tensor& logits, std::span<const Label> labels);

// Linear classifier trained one AdamW step per call on detached features.
class OnlineProbe {
 public:
  OnlineProbe(std::size_t dim, std::size_t classes, double lr = 1e-2);

  // Accuracy on the batch before the update, then one optimizer step.
  double step(const Tensor& features, std::span<const Label> labels);
  double evaluate(const Tensor& features, std::span<const Label> labels) const;
  // Mean pre-update batch accuracy over the last `window` steps.
  double running_accuracy(std::size_t window = 20) const;

  const ParamSet& params() const { return params_; }

 private:
  Tensor logits(const Tensor& features) const;

  std::size_t classes_;
  double lr_;
  ParamSet params_;
  Optimizer optimizer_;
  std::vector<double> history_;
};

}  // namespace sslforge

#endif  // SSLFORGE_EVAL_PROBE_H_
