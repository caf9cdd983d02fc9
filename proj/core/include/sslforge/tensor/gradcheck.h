#ifndef SSLFORGE_TENSOR_GRADCHECK_H_
#define SSLFORGE_TENSOR_GRADCHECK_H_

#include <functional>
#include <vector>

#include "sslforge/tensor/tensor.h"

namespace sslforge {

// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h = 1e-5);

// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double a, double b);

struct GradReport {
  std::vector<Tensor> analytic;
  std::vector<Tensor> numeric;
  double max_rel_error = 0.0;
};

// Compares backward() against central differences for a scalar function of
// several tensors. `f` receives tracked leaves on the analytic pass and
// constants on the numeric passes.
GradReport check_gradients(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& inputs, double h = 1e-5);

}  // namespace sslforge

#endif  // SSLFORGE_TENSOR_GRADCHECK_H_
