#ifndef SSLFORGE_OPTIM_OPTIMIZER_H_
#define SSLFORGE_OPTIM_OPTIMIZER_H_

#include <cstddef>
#include <span>
#include <vector>

#include "sslforge/models/params.h"
#include "sslforge/tensor/tensor.h"

namespace sslforge {

enum class OptimKind { kSgd, kAdam };

struct OptimConfig {
  OptimKind kind = OptimKind::kSgd;
  double momentum = 0.9;  // SGD
  double beta1 = 0.9;     // Adam
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // Tensors not flagged for decay (biases, normalization) skip weight decay.
  bool exempt_bias_and_norm = true;
};

struct OptimState {
  std::vector<std::vector<double>> first;   // momentum / first moment
  std::vector<std::vector<double>> second;  // second moment (Adam)
  std::size_t step = 0;
};

// v <- beta v + g;  p <- p - lr v - lr wd p
void sgd_step(std::span<double> p, std::span<const double> g, std::span<double> v, double lr,
              double beta, double weight_decay);

// One AdamW update at step t >= 1 (bias corrections use t).
void adam_step(std::span<double> p, std::span<const double> g, std::span<double> m,
               std::span<double> v, std::size_t t, double lr, double beta1, double beta2,
               double eps, double weight_decay);

class Optimizer {
 public:
  explicit Optimizer(OptimConfig config) : config_(config) {}

  // Reads each tensor's gradient and replaces it with an updated leaf.
  void step(ParamSet& params, double lr);
  // Same with externally reduced gradients, one vector per parameter.
  void step(ParamSet& params, const std::vector<std::vector<double>>& grads, double lr);
  // Same for a plain list of leaves; every tensor decays.
  void step(std::vector<Tensor>& leaves, double lr);

  const OptimConfig& config() const { return config_; }
  const OptimState& state() const { return state_; }

 private:
  std::vector<double> update(std::size_t i, const Tensor& t, const std::vector<double>& g,
                             double lr, bool decays);

  OptimConfig config_;
  OptimState state_;
};

}  // namespace sslforge

#endif  // SSLFORGE_OPTIM_OPTIMIZER_H_
