#ifndef SSLFORGE_HARNESS_CONFIG_H_
#define SSLFORGE_HARNESS_CONFIG_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sslforge/data/augment.h"
#include "sslforge/losses/noncontrastive.h"
#include "sslforge/models/encoder.h"
#include "sslforge/optim/optimizer.h"

namespace sslforge {

struct RunSection {
  std::string method;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::filesystem::path output_dir;
  std::size_t log_every = 10;
  std::size_t diag_every = 1;  // epochs
  bool wall_time = true;
  bool dump_embeddings = true;
};

struct DataSection {
  std::string source;  // synthetic | file
  std::filesystem::path path, val_path;
  std::size_t train_size = 0, val_size = 0, classes = 0, image_size = 0, channels = 3;
};

struct AugSection {
  std::string policy;  // standard | crop | identity
  AugPolicy global;
  AugPolicy local;
  std::size_t local_crops = 0;
  double mask_ratio = 0.75;
  std::size_t mask_patch = 4;
};

struct LossSection {
  std::string family;
  double tau = 0.2;
  bool normalize = true;
  double margin = 1.0, beta = 0.1, epsilon = 0.0, c = 1.0;
  std::string phi_psi;
  VicRegWeights vicreg;
  double lambda_offdiag = 5e-3;
  DinoTemperatures dino;
  double center_momentum = 0.9;
  std::size_t queue_size = 256;
  double penalty_weight = 1.0;
};

struct OptimSection {
  OptimConfig optimizer;
  double base_lr = 1e-3;
  std::string lr_scaling;  // none | linear | sqrt
  std::size_t warmup_epochs = 10;
};

struct EmaSection {
  bool enabled = false;
  double momentum = 0.996;
  bool cosine = true;
};

struct DistSection {
  std::size_t world_size = 1;
  std::size_t per_device_batch = 64;
  std::size_t effective_batch() const { return world_size * per_device_batch; }
};

struct EvalSection {
  std::size_t knn_k = 20;
  double knn_t = 0.07;
  std::size_t probe_epochs = 100;
  double probe_lr = 1e-2;
  std::size_t mlp_hidden = 64;
  bool online_probe = true;
  double online_probe_lr = 1e-2;
  double rankme_eps = 1e-7;
  std::size_t rankme_samples = 256;
};

struct SweepSection {
  std::string key;
  std::vector<std::string> values;
  std::size_t epochs = 5;
};

// Flat "section.key" -> value map holding every schema key.
using ConfigEntries = std::map<std::string, std::string>;

struct ExperimentConfig {
  RunSection run;
  DataSection data;
  AugSection aug;
  EncoderSpec model;
  LossSection loss;
  OptimSection optim;
  EmaSection ema;
  DistSection dist;
  EvalSection eval;
  SweepSection sweep;
  ConfigEntries entries;  // resolved values, for echo and overrides
};

// Parses INI text into "section.key" entries. Unknown sections or keys,
// keys outside a section and malformed text raise ConfigError.
ConfigEntries parse_config_text(const std::string& text);
ConfigEntries read_config_file(const std::filesystem::path& path);

// Schema defaults, then the preset named by run.method, then `user`, then the
// SSLFORGE_SEED environment variable. Validates every value (ConfigError).
ExperimentConfig resolve_config(const ConfigEntries& user);
ExperimentConfig load_config(const std::filesystem::path& path);

// Re-resolves with one entry replaced.
ExperimentConfig with_override(const ExperimentConfig& config, const std::string& key,
                               const std::string& value);

// Every resolved key in schema order, as INI text that resolves to the same
// configuration.
std::string echo_config(const ExperimentConfig& config);

std::vector<std::string> method_presets();

// Stable hash of the model section, stored in checkpoints.
std::string model_hash(const ExperimentConfig& config);

}  // namespace sslforge

#endif  // SSLFORGE_HARNESS_CONFIG_H_
