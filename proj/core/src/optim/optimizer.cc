#include "sslforge/optim/optimizer.h"

#include <cmath>

#include <fmt/format.h>

#include "sslforge/common/error.h"

namespace sslforge {
namespace {

void require_sizes(std::size_t p, std::size_t g, std::size_t b) {
  if (p != g || p != b) {
    throw DimensionError(fmt::format("optimizer buffers of sizes {}, {}, {} differ", p, g, b));
  }
}

}  // namespace

void sgd_step(std::span<double> p, std::span<const double> g, std::span<double> v, double lr,
              double beta, double weight_decay) {
  require_sizes(p.size(), g.size(), v.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    v[k] = beta * v[k] + g[k];
    p[k] = p[k] - lr * v[k] - lr * weight_decay * p[k];
  }
}

void adam_step(std::span<double> p, std::span<const double> g, std::span<double> m,
               std::span<double> v, std::size_t t, double lr, double beta1, double beta2,
               double eps, double weight_decay) {
  require_sizes(p.size(), g.size(), m.size());
  require_sizes(p.size(), g.size(), v.size());
  if (t == 0) throw ParameterError("adam_step: step count starts at 1");
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < p.size(); ++k) {
    m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
    v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
    const double mhat = m[k] / c1;
    const double vhat = v[k] / c2;
    p[k] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[k]);
  }
}

std::vector<double> Optimizer::update(std::size_t i, const Tensor& t,
                                      const std::vector<double>& g, double lr, bool decays) {
  if (state_.first.size() <= i) {
    state_.first.resize(i + 1);
    state_.second.resize(i + 1);
  }
  auto& m = state_.first[i];
  auto& v = state_.second[i];
  if (m.empty()) m.assign(t.size(), 0.0);
  std::vector<double> p = t.vec();
  const double wd = (decays || !config_.exempt_bias_and_norm) ? config_.weight_decay : 0.0;
  if (config_.kind == OptimKind::kSgd) {
    sgd_step(p, g, m, lr, config_.momentum, wd);
  } else {
    if (v.empty()) v.assign(t.size(), 0.0);
    adam_step(p, g, m, v, state_.step, lr, config_.beta1, config_.beta2, config_.eps, wd);
  }
  return p;
}

void Optimizer::step(ParamSet& params, double lr) {
  ++state_.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    params.set_values(i, update(i, params.at(i), params.at(i).grad(), lr, params.decays(i)));
  }
}

void Optimizer::step(ParamSet& params, const std::vector<std::vector<double>>& grads, double lr) {
  if (grads.size() != params.size()) {
    throw DimensionError(fmt::format("optimizer: {} gradients for {} parameters", grads.size(),
                                     params.size()));
  }
  ++state_.step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    params.set_values(i, update(i, params.at(i), grads[i], lr, params.decays(i)));
  }
}

void Optimizer::step(std::vector<Tensor>& leaves, double lr) {
  ++state_.step;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    leaves[i] = Tensor::parameter(leaves[i].shape(), update(i, leaves[i], leaves[i].grad(), lr, true));
  }
}

}  // namespace sslforge
