#include "sslforge/harness/config.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "sslforge/common/error.h"
#include "sslforge/losses/unified.h"
#include "sslforge/models/checkpoint.h"

namespace sslforge {
namespace {

struct KeyDefault {
  const char* key;
  const char* value;
};

// Schema order is the echo order.
const std::vector<KeyDefault>& schema() {
  static const std::vector<KeyDefault> keys = {
      {"run.method", "simclr"},
      {"run.seed", "0"},
      {"run.epochs", "30"},
      {"run.output_dir", "runs/default"},
      {"run.log_every", "10"},
      {"run.diag_every", "1"},
      {"run.wall_time", "true"},
      {"run.dump_embeddings", "true"},
      {"data.source", "synthetic"},
      {"data.path", ""},
      {"data.val_path", ""},
      {"data.train_size", "1024"},
      {"data.val_size", "512"},
      {"data.classes", "4"},
      {"data.image_size", "24"},
      {"data.channels", "3"},
      {"aug.policy", "standard"},
      {"aug.scale_min", "0.4"},
      {"aug.scale_max", "1.0"},
      {"aug.flip_p", "0.5"},
      {"aug.jitter_p", "0.8"},
      {"aug.brightness", "0.4"},
      {"aug.contrast", "0.4"},
      {"aug.saturation", "0.4"},
      {"aug.gray_p", "0.2"},
      {"aug.blur_p", "0.5"},
      {"aug.blur_sigma_min", "0.1"},
      {"aug.blur_sigma_max", "1.5"},
      {"aug.local_crops", "0"},
      {"aug.local_size", "12"},
      {"aug.local_scale_min", "0.05"},
      {"aug.local_scale_max", "0.4"},
      {"aug.mask_ratio", "0.75"},
      {"aug.mask_patch", "4"},
      {"model.trunk", "conv"},
      {"model.conv_channels", "16,32,64"},
      {"model.trunk_widths", "256,64"},
      {"model.trunk_bn", "false"},
      {"model.linear_dim", "64"},
      {"model.projector", "128,64"},
      {"model.projector_bn", "false"},
      {"model.predictor", "none"},
      {"model.predictor_bn", "false"},
      {"loss.family", "nt_xent"},
      {"loss.tau", "0.2"},
      {"loss.normalize", "true"},
      {"loss.margin", "1.0"},
      {"loss.beta", "0.1"},
      {"loss.epsilon", "0"},
      {"loss.c", "1"},
      {"loss.phi_psi", "infonce"},
      {"loss.inv", "25"},
      {"loss.var", "25"},
      {"loss.cov", "1"},
      {"loss.gamma", "1"},
      {"loss.eps", "1e-4"},
      {"loss.lambda_offdiag", "5e-3"},
      {"loss.dino_tau_s", "0.1"},
      {"loss.dino_tau_t", "0.05"},
      {"loss.center_momentum", "0.9"},
      {"loss.queue_size", "256"},
      {"loss.penalty_weight", "1"},
      {"optim.kind", "adam"},
      {"optim.base_lr", "3e-3"},
      {"optim.lr_scaling", "none"},
      {"optim.momentum", "0.9"},
      {"optim.beta1", "0.9"},
      {"optim.beta2", "0.999"},
      {"optim.eps", "1e-8"},
      {"optim.weight_decay", "1e-6"},
      {"optim.warmup_epochs", "10"},
      {"optim.exempt_bias_and_norm", "true"},
      {"ema.enabled", "false"},
      {"ema.momentum", "0.996"},
      {"ema.schedule", "cosine"},
      {"dist.world_size", "1"},
      {"dist.per_device_batch", "64"},
      {"eval.knn_k", "20"},
      {"eval.knn_t", "0.07"},
      {"eval.probe_epochs", "100"},
      {"eval.probe_lr", "1e-2"},
      {"eval.mlp_hidden", "64"},
      {"eval.online_probe", "true"},
      {"eval.online_probe_lr", "1e-2"},
      {"eval.rankme_eps", "1e-7"},
      {"eval.rankme_samples", "256"},
      {"sweep.key", "loss.tau"},
      {"sweep.values", "0.05,0.1,0.2,0.5,1.0"},
      {"sweep.epochs", "5"},
  };
  return keys;
}

const std::map<std::string, ConfigEntries>& presets() {
  static const std::map<std::string, ConfigEntries> table = {
      {"simclr", {{"loss.family", "nt_xent"}, {"loss.tau", "0.1"}}},
      {"nnclr", {{"loss.family", "nnclr"}, {"loss.tau", "0.1"}, {"loss.queue_size", "256"}}},
      {"byol",
       {{"loss.family", "byol"},
        {"model.projector", "128,32"},
        {"model.predictor", "64,32"},
        {"ema.enabled", "true"},
        {"ema.momentum", "0.99"}}},
      {"simsiam", {{"loss.family", "simsiam"}, {"model.predictor", "64,64"}}},
      {"dino",
       {{"loss.family", "dino"},
        {"ema.enabled", "true"},
        {"ema.momentum", "0.99"},
        {"aug.local_crops", "2"}}},
      {"vicreg", {{"loss.family", "vicreg"}, {"model.projector", "128,128"}}},
      {"barlow", {{"loss.family", "barlow"}, {"model.projector", "128,128"}}},
      {"mae-toy",
       {{"loss.family", "mae"},
        {"aug.policy", "crop"},
        {"model.projector", "256,pixels"}}},
      {"invariance",
       {{"loss.family", "vicreg"},
        {"loss.var", "0"},
        {"loss.cov", "0"},
        {"model.projector", "128,128"}}},
  };
  return table;
}

const std::vector<std::string>& loss_families() {
  static const std::vector<std::string> names = {
      "nt_xent", "info_nce", "dcl",    "nnclr", "generalized", "contrastive", "triplet",
      "nca",     "tuple",    "byol",   "simsiam", "dino",      "vicreg",      "barlow",
      "dccae",   "mae"};
  return names;
}

class Reader {
 public:
  explicit Reader(const ConfigEntries& e) : entries_(e) {}

  const std::string& str(const std::string& key) const { return entries_.at(key); }

  double real(const std::string& key) const {
    const std::string& s = str(key);
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used == s.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(fmt::format("{}: '{}' is not a finite number", key, s));
  }

  std::size_t count(const std::string& key) const { return parse_count(key, str(key)); }

  bool flag(const std::string& key) const {
    const std::string& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError(fmt::format("{}: '{}' is not a boolean", key, s));
  }

  std::vector<std::size_t> widths(const std::string& key, std::size_t pixels) const {
    std::vector<std::size_t> out;
    for (const std::string& part : split(str(key))) {
      out.push_back(part == "pixels" ? pixels : parse_count(key, part));
    }
    return out;
  }

  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string part;
    while (std::getline(ss, part, ',')) {
      part.erase(0, part.find_first_not_of(" \t"));
      part.erase(part.find_last_not_of(" \t") + 1);
      if (!part.empty()) out.push_back(part);
    }
    return out;
  }

 private:
  static std::size_t parse_count(const std::string& key, const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError(fmt::format("{}: '{}' is not a non-negative integer", key, s));
    }
    try {
      return static_cast<std::size_t>(std::stoull(s));
    } catch (const std::exception&) {
      throw ConfigError(fmt::format("{}: '{}' is out of range", key, s));
    }
  }

  const ConfigEntries& entries_;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

template <typename T>
void one_of(const std::string& key, const std::string& value, const T& allowed) {
  if (std::find(allowed.begin(), allowed.end(), value) == allowed.end()) {
    throw ConfigError(fmt::format("{}: unknown value '{}'", key, value));
  }
}

AugPolicy build_policy(const Reader& r, const std::string& kind, std::size_t size, double smin,
                       double smax) {
  AugPolicy p;
  p.output_size = size;
  if (kind == "identity") return p;
  p.steps.push_back(RandomResizedCrop{.scale_min = smin, .scale_max = smax});
  p.steps.push_back(HorizontalFlip{.probability = r.real("aug.flip_p")});
  if (kind == "standard") {
    p.steps.push_back(ColorJitter{.probability = r.real("aug.jitter_p"),
                                  .brightness = r.real("aug.brightness"),
                                  .contrast = r.real("aug.contrast"),
                                  .saturation = r.real("aug.saturation")});
    p.steps.push_back(Grayscale{.probability = r.real("aug.gray_p")});
    p.steps.push_back(GaussianBlur{.probability = r.real("aug.blur_p"),
                                   .sigma_min = r.real("aug.blur_sigma_min"),
                                   .sigma_max = r.real("aug.blur_sigma_max")});
  }
  return p;
}

ExperimentConfig build(const ConfigEntries& entries) {
  const Reader r(entries);
  ExperimentConfig c;
  c.entries = entries;

  c.run.method = r.str("run.method");
  c.run.seed = r.count("run.seed");
  c.run.epochs = r.count("run.epochs");
  c.run.output_dir = r.str("run.output_dir");
  c.run.log_every = r.count("run.log_every");
  c.run.diag_every = r.count("run.diag_every");
  c.run.wall_time = r.flag("run.wall_time");
  c.run.dump_embeddings = r.flag("run.dump_embeddings");
  require(c.run.epochs >= 1, "run.epochs must be at least 1");
  require(c.run.log_every >= 1 && c.run.diag_every >= 1, "run cadences must be at least 1");

  c.data.source = r.str("data.source");
  one_of("data.source", c.data.source, std::vector<std::string>{"synthetic", "file"});
  c.data.path = r.str("data.path");
  c.data.val_path = r.str("data.val_path");
  c.data.train_size = r.count("data.train_size");
  c.data.val_size = r.count("data.val_size");
  c.data.classes = r.count("data.classes");
  c.data.image_size = r.count("data.image_size");
  const std::size_t channels = r.count("data.channels");
  c.data.channels = channels;
  require(channels >= 1, "data.channels must be positive");
  if (c.data.source == "file") {
    require(!c.data.path.empty() && !c.data.val_path.empty(),
            "data.source = file needs data.path and data.val_path");
  } else {
    require(channels == 3, "synthetic data has 3 channels");
    require(c.data.train_size >= 2 && c.data.val_size >= 1, "data sizes too small");
    require(c.data.classes >= 2 && c.data.classes <= 8, "data.classes must be in [2, 8]");
    require(c.data.image_size >= 16, "data.image_size must be at least 16");
  }

  c.aug.policy = r.str("aug.policy");
  one_of("aug.policy", c.aug.policy, std::vector<std::string>{"standard", "crop", "identity"});
  c.aug.global = build_policy(r, c.aug.policy, c.data.image_size, r.real("aug.scale_min"),
                              r.real("aug.scale_max"));
  c.aug.local = build_policy(r, c.aug.policy, r.count("aug.local_size"),
                             r.real("aug.local_scale_min"), r.real("aug.local_scale_max"));
  c.aug.local_crops = r.count("aug.local_crops");
  c.aug.mask_ratio = r.real("aug.mask_ratio");
  c.aug.mask_patch = r.count("aug.mask_patch");
  try {
    c.aug.global.validate();
    c.aug.local.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(fmt::format("aug: {}", e.what()));
  }

  const std::size_t pixels = channels * c.data.image_size * c.data.image_size;
  const std::string trunk = r.str("model.trunk");
  one_of("model.trunk", trunk, std::vector<std::string>{"conv", "mlp", "linear"});
  c.model.trunk = trunk == "conv" ? TrunkKind::kConv
                  : trunk == "mlp" ? TrunkKind::kMlp
                                   : TrunkKind::kLinear;
  c.model.image_size = c.data.image_size;
  c.model.channels = channels;
  c.model.conv_channels = r.widths("model.conv_channels", pixels);
  c.model.input_dim = c.model.trunk == TrunkKind::kConv ? 0 : pixels;
  c.model.trunk_mlp = MlpSpec{r.widths("model.trunk_widths", pixels), {}};
  if (r.flag("model.trunk_bn") && !c.model.trunk_mlp.widths.empty()) {
    c.model.trunk_mlp.batch_norm.assign(c.model.trunk_mlp.widths.size() - 1, true);
  }
  c.model.linear_dim = r.count("model.linear_dim");
  const auto head = [&](const char* key, const char* bn) -> std::optional<MlpSpec> {
    if (r.str(key) == "none") return std::nullopt;
    MlpSpec spec{r.widths(key, pixels), {}};
    if (r.flag(bn)) spec.batch_norm.assign(spec.widths.size() - 1, true);
    return spec;
  };
  c.model.projector = head("model.projector", "model.projector_bn");
  c.model.predictor = head("model.predictor", "model.predictor_bn");
  try {
    c.model.validate();
  } catch (const SpecError& e) {
    throw ConfigError(fmt::format("model: {}", e.what()));
  }

  c.loss.family = r.str("loss.family");
  one_of("loss.family", c.loss.family, loss_families());
  c.loss.tau = r.real("loss.tau");
  c.loss.normalize = r.flag("loss.normalize");
  c.loss.margin = r.real("loss.margin");
  c.loss.beta = r.real("loss.beta");
  c.loss.epsilon = r.real("loss.epsilon");
  c.loss.c = r.real("loss.c");
  c.loss.phi_psi = r.str("loss.phi_psi");
  c.loss.vicreg = {r.real("loss.inv"), r.real("loss.var"), r.real("loss.cov"),
                   r.real("loss.gamma"), r.real("loss.eps")};
  c.loss.lambda_offdiag = r.real("loss.lambda_offdiag");
  c.loss.dino = {r.real("loss.dino_tau_s"), r.real("loss.dino_tau_t")};
  c.loss.center_momentum = r.real("loss.center_momentum");
  c.loss.queue_size = r.count("loss.queue_size");
  c.loss.penalty_weight = r.real("loss.penalty_weight");
  require(c.loss.tau > 0 && c.loss.dino.student > 0 && c.loss.dino.teacher > 0,
          "loss temperatures must be positive");
  require(c.loss.center_momentum >= 0 && c.loss.center_momentum < 1,
          "loss.center_momentum must be in [0, 1)");
  try {
    c.loss.vicreg.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(fmt::format("loss: {}", e.what()));
  }
  if (c.loss.family == "generalized") {
    one_of("loss.phi_psi", c.loss.phi_psi, phi_psi_names());
  }
  if (c.loss.family == "nnclr") require(c.loss.queue_size >= 1, "loss.queue_size must be >= 1");
  if (c.loss.family == "mae") {
    require(c.model.projector_dim() == pixels,
            fmt::format("mae needs a projector of width {} (use 'pixels')", pixels));
    require(c.aug.mask_patch >= 1 && c.data.image_size % c.aug.mask_patch == 0,
            "aug.mask_patch must divide data.image_size");
    require(c.aug.mask_ratio > 0 && c.aug.mask_ratio < 1, "aug.mask_ratio must be in (0, 1)");
  }
  if (c.loss.family == "byol" || c.loss.family == "dino") {
    require(r.flag("ema.enabled"), fmt::format("{} needs ema.enabled = true", c.loss.family));
  }
  if (c.aug.local_crops > 0) {
    require(c.model.trunk == TrunkKind::kConv, "local crops need the conv trunk");
    const std::vector<std::string> two_view{"generalized", "vicreg", "barlow", "dccae", "mae"};
    require(std::find(two_view.begin(), two_view.end(), c.loss.family) == two_view.end(),
            fmt::format("{} does not take local crops", c.loss.family));
  }

  const std::string kind = r.str("optim.kind");
  one_of("optim.kind", kind, std::vector<std::string>{"sgd", "adam"});
  c.optim.optimizer = OptimConfig{
      .kind = kind == "sgd" ? OptimKind::kSgd : OptimKind::kAdam,
      .momentum = r.real("optim.momentum"),
      .beta1 = r.real("optim.beta1"),
      .beta2 = r.real("optim.beta2"),
      .eps = r.real("optim.eps"),
      .weight_decay = r.real("optim.weight_decay"),
      .exempt_bias_and_norm = r.flag("optim.exempt_bias_and_norm")};
  c.optim.base_lr = r.real("optim.base_lr");
  c.optim.lr_scaling = r.str("optim.lr_scaling");
  one_of("optim.lr_scaling", c.optim.lr_scaling,
         std::vector<std::string>{"none", "linear", "sqrt"});
  c.optim.warmup_epochs = r.count("optim.warmup_epochs");
  require(c.optim.base_lr > 0, "optim.base_lr must be positive");

  c.ema.enabled = r.flag("ema.enabled");
  c.ema.momentum = r.real("ema.momentum");
  one_of("ema.schedule", r.str("ema.schedule"), std::vector<std::string>{"cosine", "constant"});
  c.ema.cosine = r.str("ema.schedule") == "cosine";
  require(c.ema.momentum >= 0 && c.ema.momentum <= 1, "ema.momentum must be in [0, 1]");

  c.dist.world_size = r.count("dist.world_size");
  c.dist.per_device_batch = r.count("dist.per_device_batch");
  require(c.dist.world_size >= 1 && c.dist.per_device_batch >= 1, "dist sizes must be positive");
  require(c.dist.effective_batch() >= 2, "effective batch must be at least 2");
  if (c.data.source == "synthetic") {
    require(c.dist.effective_batch() <= c.data.train_size,
            "effective batch exceeds data.train_size");
  }

  c.eval.knn_k = r.count("eval.knn_k");
  c.eval.knn_t = r.real("eval.knn_t");
  c.eval.probe_epochs = r.count("eval.probe_epochs");
  c.eval.probe_lr = r.real("eval.probe_lr");
  c.eval.mlp_hidden = r.count("eval.mlp_hidden");
  c.eval.online_probe = r.flag("eval.online_probe");
  c.eval.online_probe_lr = r.real("eval.online_probe_lr");
  c.eval.rankme_eps = r.real("eval.rankme_eps");
  c.eval.rankme_samples = r.count("eval.rankme_samples");
  require(c.eval.knn_k >= 1 && c.eval.knn_t > 0, "eval.knn_k and eval.knn_t must be positive");
  require(c.eval.mlp_hidden >= 1 && c.eval.rankme_samples >= 1, "eval sizes must be positive");

  c.sweep.key = r.str("sweep.key");
  c.sweep.values = Reader::split(r.str("sweep.values"));
  c.sweep.epochs = r.count("sweep.epochs");
  if (!entries.contains(c.sweep.key) || c.sweep.key.starts_with("sweep.")) {
    throw ConfigError(fmt::format("sweep.key: '{}' is not a sweepable key", c.sweep.key));
  }
  require(c.sweep.epochs >= 1, "sweep.epochs must be at least 1");
  return c;
}

}  // namespace

std::vector<std::string> method_presets() {
  std::vector<std::string> out;
  for (const auto& [name, _] : presets()) out.push_back(name);
  return out;
}

ConfigEntries parse_config_text(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
  }
  std::map<std::string, bool> known;
  for (const auto& k : schema()) known[k.key] = true;
  ConfigEntries out;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError(fmt::format("config key '{}' is outside a section", section));
    }
    for (const auto& [key, value] : body) {
      const std::string full = section + "." + key;
      if (!known.contains(full)) throw ConfigError(fmt::format("unknown config key '{}'", full));
      out[full] = value.get_value<std::string>();
    }
  }
  return out;
}

ConfigEntries read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot read config file {}", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

ExperimentConfig resolve_config(const ConfigEntries& user) {
  ConfigEntries merged;
  for (const auto& k : schema()) merged[k.key] = k.value;
  for (const auto& [key, value] : user) {
    if (!merged.contains(key)) throw ConfigError(fmt::format("unknown config key '{}'", key));
  }
  const std::string method = user.contains("run.method") ? user.at("run.method")
                                                          : merged.at("run.method");
  const auto preset = presets().find(method);
  if (preset == presets().end()) {
    throw ConfigError(fmt::format("run.method: unknown preset '{}'", method));
  }
  for (const auto& [key, value] : preset->second) merged[key] = value;
  for (const auto& [key, value] : user) merged[key] = value;
  if (const char* env = std::getenv("SSLFORGE_SEED"); env != nullptr && *env != '\0') {
    merged["run.seed"] = env;
  }
  return build(merged);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return resolve_config(read_config_file(path));
}

ExperimentConfig with_override(const ExperimentConfig& config, const std::string& key,
                               const std::string& value) {
  ConfigEntries e = config.entries;
  if (!e.contains(key)) throw ConfigError(fmt::format("unknown config key '{}'", key));
  e[key] = value;
  return resolve_config(e);
}

std::string echo_config(const ExperimentConfig& config) {
  std::string out = "# resolved configuration\n";
  std::string section;
  for (const auto& k : schema()) {
    const std::string key = k.key;
    const std::size_t dot = key.find('.');
    if (key.substr(0, dot) != section) {
      section = key.substr(0, dot);
      out += fmt::format("{}[{}]\n", out.size() > 25 ? "\n" : "", section);
    }
    out += fmt::format("{} = {}\n", key.substr(dot + 1), config.entries.at(key));
  }
  return out;
}

std::string model_hash(const ExperimentConfig& config) {
  std::string text;
  for (const auto& [key, value] : config.entries) {
    if (key.starts_with("model.") || key == "data.image_size" || key == "data.channels") {
      text += key + "=" + value + "\n";
    }
  }
  return fnv1a_hex(text);
}

}  // namespace sslforge
