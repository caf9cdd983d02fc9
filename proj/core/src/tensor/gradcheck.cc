#include "sslforge/tensor/gradcheck.h"

#include <algorithm>
#include <cmath>

#include "sslforge/common/error.h"

namespace sslforge {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f,
                        const Tensor& x, double h) {
  if (!(h > 0.0)) throw ParameterError("finite_diff_grad: h must be positive");
  std::vector<double> base = x.vec();
  std::vector<double> g(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double orig = base[i];
    base[i] = orig + h;
    const double up = f(Tensor(x.shape(), base));
    base[i] = orig - h;
    const double down = f(Tensor(x.shape(), base));
    base[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return Tensor(x.shape(), std::move(g));
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

GradReport check_gradients(
    const std::function<Tensor(const std::vector<Tensor>&)>& f,
    const std::vector<Tensor>& inputs, double h) {
  GradReport report;
  std::vector<Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const auto& t : inputs) leaves.push_back(t.with_grad());
  backward(f(leaves));
  for (const auto& leaf : leaves) report.analytic.push_back(leaf.grad_tensor());

  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto fk = [&](const Tensor& xk) {
      std::vector<Tensor> args;
      args.reserve(inputs.size());
      for (std::size_t j = 0; j < inputs.size(); ++j) {
        args.push_back(j == k ? xk : inputs[j].detach());
      }
      return f(args).item();
    };
    report.numeric.push_back(finite_diff_grad(fk, inputs[k].detach(), h));
    const auto& a = report.analytic[k].vec();
    const auto& b = report.numeric[k].vec();
    for (std::size_t i = 0; i < a.size(); ++i) {
      report.max_rel_error = std::max(report.max_rel_error, relative_error(a[i], b[i]));
    }
  }
  return report;
}

}  // namespace sslforge
