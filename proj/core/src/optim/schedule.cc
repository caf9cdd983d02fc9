#include "sslforge/optim/schedule.h"

#include <cmath>
#include <numbers>
#include <string>

#include <fmt/format.h>

#include "sslforge/common/error.h"

namespace sslforge {

LrScaling parse_lr_scaling(std::string_view name) {
  if (name == "linear") return LrScaling::kLinear;
  if (name == "sqrt") return LrScaling::kSqrt;
  throw ConfigError(fmt::format("unknown lr scaling rule '{}' (linear|sqrt)", name));
}

double scaled_lr(double base_lr, std::size_t effective_batch, LrScaling rule) {
  if (effective_batch == 0) throw ParameterError("effective batch must be at least 1");
  const double b = static_cast<double>(effective_batch);
  return rule == LrScaling::kLinear ? base_lr * b / 256.0 : base_lr * std::sqrt(b) / 256.0;
}

double lr_at(std::size_t step, std::size_t total, std::size_t warmup, double peak) {
  if (warmup > total) {
    throw ParameterError(fmt::format("warmup {} exceeds total steps {}", warmup, total));
  }
  if (step < warmup) {
    return peak * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (total == warmup) return peak;
  const double t = static_cast<double>(std::min(step, total) - warmup) /
                   static_cast<double>(total - warmup);
  return peak * (std::cos(std::numbers::pi * t) + 1.0) / 2.0;
}

}  // namespace sslforge
