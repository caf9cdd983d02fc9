#ifndef SSLFORGE_MODELS_TEACHER_H_
#define SSLFORGE_MODELS_TEACHER_H_

#include <cstddef>
#include <span>
#include <vector>

#include "sslforge/models/params.h"
#include "sslforge/tensor/tensor.h"

namespace sslforge {

// Untracked mirror of the student parameters plus the running DINO center.
struct TeacherState {
  ParamSet params;
  double momentum = 0.996;
  std::vector<double> center;
};

TeacherState make_teacher(const ParamSet& student, double momentum, std::size_t center_dim);

// theta_t <- xi * theta_t + (1 - xi) * theta_s. Throws ParameterError unless
// xi is in [0, 1] and SpecError if the layouts differ.
TeacherState ema_update(const TeacherState& teacher, const ParamSet& student, double xi);

// 1 - (1 - start) (cos(pi t / T) + 1) / 2: start at t = 0, 1 at t = T.
double ema_schedule(std::size_t step, std::size_t total_steps, double start);

// c <- m c + (1 - m) mean_rows(teacher_out). m must lie in [0, 1).
std::vector<double> center_update(std::span<const double> center, const Tensor& teacher_out,
                                  double momentum = 0.9);

}  // namespace sslforge

#endif  // SSLFORGE_MODELS_TEACHER_H_
