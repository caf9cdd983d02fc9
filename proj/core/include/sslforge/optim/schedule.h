#ifndef SSLFORGE_OPTIM_SCHEDULE_H_
#define SSLFORGE_OPTIM_SCHEDULE_H_

#include <cstddef>
#include <string_view>

namespace sslforge {

enum class LrScaling { kLinear, kSqrt };

LrScaling parse_lr_scaling(std::string_view name);

// linear: base * batch / 256;  sqrt: base * sqrt(batch) / 256
double scaled_lr(double base_lr, std::size_t effective_batch, LrScaling rule);

// Linear warmup from 0 to peak over `warmup` steps, then cosine decay to 0 at
// `total`.
double lr_at(std::size_t step, std::size_t total, std::size_t warmup, double peak);

}  // namespace sslforge

#endif  // SSLFORGE_OPTIM_SCHEDULE_H_
