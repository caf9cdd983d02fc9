#include "sslforge/losses/nce.h"

#include <cmath>

#include <fmt/format.h>

#include "sslforge/common/error.h"
#include "sslforge/optim/optimizer.h"
#include "sslforge/tensor/ops.h"

namespace sslforge {
namespace {

// Rows (1, v, v^2, 1) and the constant offset -log eta - log p_noise(v).
std::pair<Tensor, Tensor> design(std::span<const double> v,
                                 const std::function<double(double)>& noise_log_density,
                                 double log_eta) {
  std::vector<double> x(v.size() * 4), offset(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    x[4 * i] = 1.0;
    x[4 * i + 1] = v[i];
    x[4 * i + 2] = v[i] * v[i];
    x[4 * i + 3] = 1.0;
    const double lp = noise_log_density(v[i]);
    if (!std::isfinite(lp)) {
      throw ContractError(fmt::format("noise density vanishes at sample {}", v[i]));
    }
    offset[i] = -log_eta - lp;
  }
  return {Tensor({v.size(), 4}, std::move(x)), Tensor({v.size(), 1}, std::move(offset))};
}

struct Design {
  Tensor xd, od, xn, on;
  double s;
};

Design make_design(std::span<const double> data, std::span<const double> noise,
                   const std::function<double(double)>& noise_log_density, double s) {
  if (data.empty() || noise.empty()) throw ParameterError("NCE needs data and noise samples");
  const double log_eta = std::log(nce_eta(s));
  auto [xd, od] = design(data, noise_log_density, log_eta);
  auto [xn, on] = design(noise, noise_log_density, log_eta);
  return Design{xd, od, xn, on, s};
}

Tensor objective(const Tensor& params, const Design& d) {
  if (params.size() != 4) throw DimensionError("NCE objective expects 4 parameters");
  const Tensor w = params.reshape({4, 1});
  const Tensor g_data = add(matmul(d.xd, w), d.od);
  const Tensor g_noise = add(matmul(d.xn, w), d.on);
  return add(scale(mean(softplus(neg(g_data))), d.s),
             scale(mean(softplus(g_noise)), 1.0 - d.s));
}

}  // namespace

double nce_eta(double s) {
  if (!(s > 0.0 && s < 1.0)) throw ParameterError(fmt::format("NCE prior {} outside (0, 1)", s));
  return (1.0 - s) / s;
}

Tensor nce_objective(const Tensor& params, std::span<const double> data,
                     std::span<const double> noise,
                     const std::function<double(double)>& noise_log_density, double s) {
  return objective(params, make_design(data, noise, noise_log_density, s));
}

NceFitResult nce_binary_fit(std::span<const double> data, std::span<const double> noise,
                            const std::function<double(double)>& noise_log_density,
                            const NceFitOptions& options, NceModel init) {
  const Design d = make_design(data, noise, noise_log_density, options.s);
  OptimConfig config;
  config.kind = OptimKind::kAdam;
  Optimizer opt(config);
  std::vector<Tensor> params{Tensor::parameter(
      {1, 4}, {init.theta[0], init.theta[1], init.theta[2], init.c})};
  for (std::size_t step = 0; step < options.steps; ++step) {
    backward(objective(params[0], d));
    opt.step(params, options.lr);
  }
  const auto& p = params[0].vec();
  NceFitResult out;
  out.model = NceModel{{p[0], p[1], p[2]}, p[3]};
  out.eta = nce_eta(options.s);
  out.final_loss = objective(params[0].detach(), d).item();
  return out;
}

}  // namespace sslforge
