#include "sslforge/eval/probe.h"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "sslforge/common/error.h"
#include "sslforge/tensor/ops.h"

namespace sslforge {
namespace {

struct Standardizer {
  std::vector<double> mean, inv_sd;

  Tensor apply(const Tensor& x) const {
    std::vector<double> v(x.vec());
    const std::size_t d = x.cols();
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t c = 0; c < d; ++c) v[i * d + c] = (v[i * d + c] - mean[c]) * inv_sd[c];
    }
    return Tensor(x.shape(), std::move(v));
  }
};

Standardizer fit_standardizer(const Tensor& x, bool enabled) {
  const std::size_t n = x.rows(), d = x.cols();
  Standardizer s{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
  if (!enabled) return s;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < d; ++c) s.mean[c] += x.at(i, c) / static_cast<double>(n);
  }
  for (std::size_t c = 0; c < d; ++c) {
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      var += (x.at(i, c) - s.mean[c]) * (x.at(i, c) - s.mean[c]) / static_cast<double>(n);
    }
    s.inv_sd[c] = 1.0 / std::max(std::sqrt(var), 1e-8);
  }
  return s;
}

std::size_t class_count(std::span<const Label> a, std::span<const Label> b) {
  Label top = 0;
  for (Label l : a) top = std::max(top, l);
  for (Label l : b) top = std::max(top, l);
  return static_cast<std::size_t>(top) + 1;
}

void check_inputs(const Tensor& train, std::span<const Label> train_labels, const Tensor& val,
                  std::span<const Label> val_labels) {
  if (train.rank() != 2 || val.rank() != 2 || train.cols() != val.cols()) {
    throw DimensionError("probe: train and validation features must have equal width");
  }
  if (train_labels.size() != train.rows() || val_labels.size() != val.rows()) {
    throw DimensionError("probe: one label per row");
  }
  if (train.rows() == 0 || val.rows() == 0) throw DataError("probe: empty feature matrix");
}

template <typename Forward>
ProbeCurve train_probe(ParamSet& params, Forward forward, const Tensor& x,
                       std::span<const Label> y, const Tensor& xv, std::span<const Label> yv,
                       const ProbeOptions& options) {
  Optimizer opt({.kind = OptimKind::kAdam, .weight_decay = options.weight_decay});
  ProbeCurve curve;
  auto record = [&] {
    curve.val_accuracy.push_back(accuracy(argmax_rows(forward(params, xv)), yv));
  };
  record();
  for (std::size_t e = 0; e < options.epochs; ++e) {
    backward(cross_entropy(forward(params, x), y));
    opt.step(params, options.lr);
    record();
  }
  const auto best = std::max_element(curve.val_accuracy.begin(), curve.val_accuracy.end());
  curve.best = *best;
  curve.best_epoch = static_cast<std::size_t>(best - curve.val_accuracy.begin());
  curve.final = curve.val_accuracy.back();
  return curve;
}

Tensor affine(const ParamSet& params, const Tensor& x) {
  return add(matmul(x, params.get("w")), expand_rows(params.get("b"), x.rows()));
}

}  // namespace

std::vector<Label> argmax_rows(const Tensor& logits) {
  std::vector<Label> out(logits.rows());
  const std::size_t c = logits.cols();
  const auto v = logits.values();
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = v.subspan(i * c, c);
    out[i] = static_cast<Label>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const Label> labels) {
  if (labels.size() != logits.rows()) throw DimensionError("cross_entropy: one label per row");
  std::vector<IndexPair> picks;
  picks.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= logits.cols()) {
      throw DimensionError(fmt::format("cross_entropy: label {} with {} classes", labels[i],
                                       logits.cols()));
    }
    picks.emplace_back(i, labels[i]);
  }
  return scale(sum(pick(log_softmax_rows(logits), picks)),
               -1.0 / static_cast<double>(labels.size()));
}

ProbeCurve linear_probe(const Tensor& train, std::span<const Label> train_labels,
                        const Tensor& val, std::span<const Label> val_labels,
                        const ProbeOptions& options) {
  check_inputs(train, train_labels, val, val_labels);
  const std::size_t classes = class_count(train_labels, val_labels);
  const Standardizer s = fit_standardizer(train, options.standardize);
  ParamSet params;
  params.add("w", Tensor::zeros({train.cols(), classes}), true);
  params.add("b", Tensor::zeros({1, classes}), false);
  return train_probe(params, affine, s.apply(train.detach()), train_labels,
                     s.apply(val.detach()), val_labels, options);
}

ProbeCurve mlp_probe(const Tensor& train, std::span<const Label> train_labels, const Tensor& val,
                     std::span<const Label> val_labels, const ProbeOptions& options) {
  check_inputs(train, train_labels, val, val_labels);
  if (options.hidden == 0) throw ParameterError("mlp_probe: hidden width must be positive");
  const std::size_t classes = class_count(train_labels, val_labels);
  const Standardizer s = fit_standardizer(train, options.standardize);
  const MlpSpec spec{{options.hidden, classes}, {}};
  ParamSet params;
  init_mlp(params, "probe", spec, train.cols(), options.seed);
  auto forward = [&spec](const ParamSet& p, const Tensor& x) {
    return mlp_forward(spec, p, "probe", x);
  };
  return train_probe(params, forward, s.apply(train.detach()), train_labels,
                     s.apply(val.detach()), val_labels, options);
}

OnlineProbe::OnlineProbe(std::size_t dim, std::size_t classes, double lr)
    : classes_(classes), lr_(lr), optimizer_({.kind = OptimKind::kAdam}) {
  if (dim == 0 || classes < 2) throw ParameterError("online probe needs dim >= 1, classes >= 2");
  params_.add("w", Tensor::zeros({dim, classes}), true);
  params_.add("b", Tensor::zeros({1, classes}), false);
}

Tensor OnlineProbe::logits(const Tensor& features) const {
  return affine(params_, stop_gradient(features));
}

double OnlineProbe::evaluate(const Tensor& features, std::span<const Label> labels) const {
  return accuracy(argmax_rows(logits(features)), labels);
}

double OnlineProbe::step(const Tensor& features, std::span<const Label> labels) {
  for (Label l : labels) {
    if (l >= classes_) throw DimensionError("online probe: label out of range");
  }
  const Tensor out = logits(features);
  const double acc = accuracy(argmax_rows(out), labels);
  backward(cross_entropy(out, labels));
  optimizer_.step(params_, lr_);
  history_.push_back(acc);
  return acc;
}

double OnlineProbe::running_accuracy(std::size_t window) const {
  if (history_.empty()) return 0.0;
  const std::size_t m = std::min(window, history_.size());
  double total = 0.0;
  for (std::size_t k = history_.size() - m; k < history_.size(); ++k) total += history_[k];
  return total / static_cast<double>(m);
}

}  // namespace sslforge
