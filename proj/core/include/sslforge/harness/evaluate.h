#ifndef SSLFORGE_HARNESS_EVALUATE_H_
#define SSLFORGE_HARNESS_EVALUATE_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sslforge/harness/config.h"
#include "sslforge/harness/pretrain.h"
#include "sslforge/models/params.h"

namespace sslforge {

struct TapReport {
  std::string tap;
  std::size_t dim = 0;
  double knn_accuracy = 0.0;
  double linear_best = 0.0, linear_final = 0.0;
  double mlp_best = 0.0, mlp_final = 0.0;
  double rankme = 0.0;
  double alpha = 0.0;  // NaN when not computable
  std::size_t numeric_rank = 0;
};

struct EvalReport {
  std::string spec_hash;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::size_t train_size = 0, val_size = 0;
  std::vector<TapReport> taps;

  const TapReport& at(const std::string& tap) const;
};

// Frozen-encoder protocol on every tap: kNN, linear and MLP probes trained on
// the train split and scored on val, plus RankMe, alpha-ReQ and numeric rank
// of the val embeddings.
EvalReport evaluate_encoder(const ExperimentConfig& config, const ParamSet& params,
                            const Datasets& data);

std::string eval_report_json(const EvalReport& report);

// Loads the checkpoint (its spec hash must match the config), dumps
// embeddings and writes eval_report.json under run.output_dir.
EvalReport run_eval(const ExperimentConfig& config, const std::filesystem::path& checkpoint_dir);

}  // namespace sslforge

#endif  // SSLFORGE_HARNESS_EVALUATE_H_
