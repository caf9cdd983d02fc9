#include "sslforge/models/teacher.h"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "sslforge/common/error.h"

namespace sslforge {

TeacherState make_teacher(const ParamSet& student, double momentum, std::size_t center_dim) {
  if (!(momentum >= 0.0 && momentum <= 1.0)) {
    throw ParameterError(fmt::format("EMA momentum {} outside [0, 1]", momentum));
  }
  return TeacherState{student.frozen(), momentum, std::vector<double>(center_dim, 0.0)};
}

TeacherState ema_update(const TeacherState& teacher, const ParamSet& student, double xi) {
  if (!(xi >= 0.0 && xi <= 1.0)) {
    throw ParameterError(fmt::format("EMA momentum {} outside [0, 1]", xi));
  }
  if (!teacher.params.same_layout(student)) {
    throw SpecError("teacher and student parameter layouts differ");
  }
  TeacherState out = teacher;
  out.momentum = xi;
  for (std::size_t i = 0; i < student.size(); ++i) {
    const auto& t = teacher.params.at(i).vec();
    const auto& s = student.at(i).vec();
    std::vector<double> v(t.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = xi * t[k] + (1.0 - xi) * s[k];
    out.params.set_values(i, std::move(v));
  }
  return out;
}

double ema_schedule(std::size_t step, std::size_t total_steps, double start) {
  if (step > total_steps) {
    throw ParameterError(fmt::format("step {} beyond total {}", step, total_steps));
  }
  if (total_steps == 0) return start;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return 1.0 - (1.0 - start) * (std::cos(std::numbers::pi * t) + 1.0) / 2.0;
}

std::vector<double> center_update(std::span<const double> center, const Tensor& teacher_out,
                                  double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ParameterError(fmt::format("center momentum {} outside [0, 1)", momentum));
  }
  const std::size_t n = teacher_out.rows(), d = teacher_out.cols();
  if (center.size() != d) {
    throw DimensionError(fmt::format("center of width {} for outputs of width {}",
                                     center.size(), d));
  }
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += teacher_out.at(i, j);
  }
  std::vector<double> out(d);
  for (std::size_t j = 0; j < d; ++j) {
    out[j] = momentum * center[j] + (1.0 - momentum) * mean[j] / static_cast<double>(n);
  }
  return out;
}

}  // namespace sslforge
