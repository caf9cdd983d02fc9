#include "sslforge/harness/evaluate.h"

#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

#include "sslforge/common/rng.h"
#include "sslforge/eval/knn.h"
#include "sslforge/eval/probe.h"
#include "sslforge/eval/spectrum.h"
#include "sslforge/models/checkpoint.h"

namespace sslforge {

const TapReport& EvalReport::at(const std::string& tap) const {
  for (const TapReport& t : taps) {
    if (t.tap == tap) return t;
  }
  throw ParameterError(fmt::format("report has no tap '{}'", tap));
}

EvalReport evaluate_encoder(const ExperimentConfig& c, const ParamSet& params,
                            const Datasets& data) {
  const TapEmbeddings train = embed_dataset(c.model, params, data.train.images);
  const TapEmbeddings val = embed_dataset(c.model, params, data.val.images);
  EvalReport report;
  report.seed = c.run.seed;
  report.train_size = data.train.size();
  report.val_size = data.val.size();
  const KnnOptions knn{.k = std::min(c.eval.knn_k, data.train.size()),
                       .temperature = c.eval.knn_t,
                       .mode = KnnMode::kWeighted};
  ProbeOptions probe{.epochs = c.eval.probe_epochs,
                     .lr = c.eval.probe_lr,
                     .weight_decay = 0.0,
                     .hidden = c.eval.mlp_hidden,
                     .standardize = true,
                     .seed = derive_seed(c.run.seed, 6)};
  for (const std::string& name : tap_names(c.model)) {
    const Tensor& tr = tap(train, name);
    const Tensor& va = tap(val, name);
    TapReport t;
    t.tap = name;
    t.dim = tr.cols();
    t.knn_accuracy = knn_classify(tr, data.train.labels, va, data.val.labels, knn).accuracy;
    const ProbeCurve lin = linear_probe(tr, data.train.labels, va, data.val.labels, probe);
    const ProbeCurve mlp = mlp_probe(tr, data.train.labels, va, data.val.labels, probe);
    t.linear_best = lin.best;
    t.linear_final = lin.final;
    t.mlp_best = mlp.best;
    t.mlp_final = mlp.final;
    try {
      const SpectrumReport s = spectrum_report(va, c.eval.rankme_eps);
      t.rankme = s.rankme;
      t.alpha = s.alpha;
      t.numeric_rank = s.numeric_rank;
    } catch (const DataError&) {
      t.rankme = std::numeric_limits<double>::quiet_NaN();
      t.alpha = std::numeric_limits<double>::quiet_NaN();
    }
    report.taps.push_back(t);
  }
  return report;
}

std::string eval_report_json(const EvalReport& r) {
  const auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  nlohmann::ordered_json j;
  j["spec_hash"] = r.spec_hash;
  j["seed"] = r.seed;
  j["step"] = r.step;
  j["train_size"] = r.train_size;
  j["val_size"] = r.val_size;
  j["taps"] = nlohmann::ordered_json::array();
  for (const TapReport& t : r.taps) {
    nlohmann::ordered_json e;
    e["tap"] = t.tap;
    e["dim"] = t.dim;
    e["knn_accuracy"] = num(t.knn_accuracy);
    e["linear_probe"] = {{"best", num(t.linear_best)}, {"final", num(t.linear_final)}};
    e["mlp_probe"] = {{"best", num(t.mlp_best)}, {"final", num(t.mlp_final)}};
    e["rankme"] = num(t.rankme);
    e["alpha_req"] = num(t.alpha);
    e["numeric_rank"] = t.numeric_rank;
    j["taps"].push_back(e);
  }
  return j.dump(2) + "\n";
}

EvalReport run_eval(const ExperimentConfig& c, const std::filesystem::path& checkpoint_dir) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_dir);
  const std::string hash = model_hash(c);
  if (ckpt.spec_hash != hash) {
    throw ConfigError(fmt::format("checkpoint spec hash {} does not match config ({})",
                                  ckpt.spec_hash, hash));
  }
  const Datasets data = load_datasets(c);
  EvalReport report = evaluate_encoder(c, ckpt.student, data);
  report.spec_hash = hash;
  report.step = ckpt.step;
  report.seed = ckpt.seed;
  const std::filesystem::path out_dir = c.run.output_dir;
  std::filesystem::create_directories(out_dir);
  dump_embeddings(out_dir / "embeddings", c, ckpt.student, data, ckpt.step);
  std::ofstream out(out_dir / "eval_report.json", std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write {}", (out_dir / "eval_report.json").string()));
  out << eval_report_json(report);
  return report;
}

}  // namespace sslforge
