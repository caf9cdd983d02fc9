#ifndef SSLFORGE_HARNESS_SWEEP_H_
#define SSLFORGE_HARNESS_SWEEP_H_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sslforge/harness/config.h"

namespace sslforge {

struct SweepCell {
  std::string value;
  double rankme = 0.0;          // backbone tap, val split
  double probe_accuracy = 0.0;  // best linear-probe val accuracy, backbone tap
};

struct SweepResult {
  std::string key;
  std::vector<SweepCell> cells;
  std::optional<double> spearman;  // empty when undefined
};

// Rank correlation with average ranks for ties. Empty for fewer than two
// points or when either side is constant.
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

// Trains one cell per sweep.values entry for sweep.epochs epochs under
// run.output_dir/cell_<k>, then writes sweep.csv and sweep_summary.txt.
SweepResult run_hparam_sweep(const ExperimentConfig& config);

std::string format_sweep_csv(const SweepResult& result);
std::string format_sweep_summary(const SweepResult& result);

}  // namespace sslforge

#endif  // SSLFORGE_HARNESS_SWEEP_H_
