#ifndef SSLFORGE_HARNESS_PRETRAIN_H_
#define SSLFORGE_HARNESS_PRETRAIN_H_

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sslforge/common/error.h"
#include "sslforge/data/synthetic.h"
#include "sslforge/harness/config.h"
#include "sslforge/models/checkpoint.h"
#include "sslforge/models/encoder.h"

namespace sslforge {

// One metrics.csv row. Unmeasured fields stay empty.
struct MetricsRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double loss = 0.0;
  std::optional<double> inv, var, cov, diag, offdiag, recon;
  double lr = 0.0;
  std::optional<double> ema_xi;
  std::optional<double> rankme_backbone, rankme_projector, rankme_predictor;
  std::optional<double> online_probe_acc;
  double wall_time = 0.0;

  bool operator==(const MetricsRecord&) const = default;
};

inline constexpr std::array<const char*, 16> kMetricsColumns = {
    "step",   "epoch",  "loss", "inv",   "var",          "cov",
    "diag",   "offdiag", "recon", "lr",  "ema_xi",       "rankme_backbone",
    "rankme_projector", "rankme_predictor", "online_probe_acc", "wall_time"};

std::string format_metrics_csv(std::span<const MetricsRecord> rows);
std::vector<MetricsRecord> parse_metrics_csv(const std::string& text);

// NaN or infinite training loss.
class TrainingAbort : public NumericalError {
 public:
  TrainingAbort(std::size_t step, std::map<std::string, double> terms);
  std::size_t step() const { return step_; }
  const std::map<std::string, double>& terms() const { return terms_; }

 private:
  std::size_t step_;
  std::map<std::string, double> terms_;
};

struct Datasets {
  LabeledImages train;
  LabeledImages val;
};

// Synthetic sets are regenerated from the run seed; file sets are loaded and
// checked against the configured image size and channels.
Datasets load_datasets(const ExperimentConfig& config);

// N x C x H x W for the conv trunk, N x (C*H*W) otherwise.
Tensor encoder_input(const EncoderSpec& spec, std::span<const Image> images);

// Taps of a frozen encoder over a whole dataset, in chunks of `chunk` rows.
struct TapEmbeddings {
  Tensor backbone;
  Tensor projector;
  std::optional<Tensor> predictor;
};
TapEmbeddings embed_dataset(const EncoderSpec& spec, const ParamSet& params,
                            std::span<const Image> images, std::size_t chunk = 256);
std::vector<std::string> tap_names(const EncoderSpec& spec);
const Tensor& tap(const TapEmbeddings& emb, const std::string& name);

// Writes embeddings/{split}_{tap}.sslt, labels_{split}.sslt and manifest.txt.
void dump_embeddings(const std::filesystem::path& dir, const ExperimentConfig& config,
                     const ParamSet& params, const Datasets& data, std::size_t step);

// Step budget and per-step lr / EMA momentum of a run over `train_size` images.
struct TrainingSchedule {
  std::size_t steps_per_epoch = 0;
  std::size_t total_steps = 0;
  std::size_t warmup = 0;
  double peak_lr = 0.0;
  bool ema = false;
  bool ema_cosine = true;
  double ema_momentum = 0.0;

  double lr(std::size_t step) const;
  // Momentum applied after optimizer step `step` (0-based); empty without EMA.
  std::optional<double> ema_xi(std::size_t step) const;
};
TrainingSchedule training_schedule(const ExperimentConfig& config, std::size_t train_size);

// "step,lr,ema_xi" with one row per optimizer step.
std::string format_schedule_csv(const TrainingSchedule& schedule);

struct PretrainResult {
  Checkpoint checkpoint;
  std::vector<MetricsRecord> metrics;
  std::size_t steps = 0;
  // Ordered view comparisons per source image.
  std::size_t pairs_per_sample = 0;
};

// Trains per `config`, writing checkpoint/, metrics.csv, resolved_config.ini
// and (if enabled) embeddings/ under run.output_dir. Throws TrainingAbort on
// a non-finite loss.
PretrainResult run_pretrain(const ExperimentConfig& config);

}  // namespace sslforge

#endif  // SSLFORGE_HARNESS_PRETRAIN_H_
