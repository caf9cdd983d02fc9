#include "sslforge/harness/sweep.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "sslforge/common/rng.h"
#include "sslforge/eval/probe.h"
#include "sslforge/eval/spectrum.h"
#include "sslforge/harness/pretrain.h"

namespace sslforge {
namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("spearman: series lengths differ");
  if (a.size() < 2) return std::nullopt;
  for (std::span<const double> s : {a, b}) {
    if (std::any_of(s.begin(), s.end(), [](double v) { return !std::isfinite(v); })) {
      return std::nullopt;
    }
  }
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

SweepResult run_hparam_sweep(const ExperimentConfig& config) {
  if (config.sweep.values.empty()) throw ConfigError("sweep.values is empty");
  SweepResult result;
  result.key = config.sweep.key;
  const std::filesystem::path root = config.run.output_dir;
  for (std::size_t k = 0; k < config.sweep.values.size(); ++k) {
    ExperimentConfig cell = with_override(config, config.sweep.key, config.sweep.values[k]);
    cell = with_override(cell, "run.epochs", std::to_string(config.sweep.epochs));
    cell = with_override(cell, "run.dump_embeddings", "false");
    cell = with_override(cell, "run.output_dir", (root / fmt::format("cell_{}", k)).string());
    const PretrainResult run = run_pretrain(cell);
    const Datasets data = load_datasets(cell);
    const Tensor train = embed_dataset(cell.model, run.checkpoint.student, data.train.images).backbone;
    const Tensor val = embed_dataset(cell.model, run.checkpoint.student, data.val.images).backbone;
    const ProbeCurve probe =
        linear_probe(train, data.train.labels, val, data.val.labels,
                     {.epochs = cell.eval.probe_epochs,
                      .lr = cell.eval.probe_lr,
                      .seed = derive_seed(cell.run.seed, 6)});
    double rm = std::numeric_limits<double>::quiet_NaN();
    try {
      rm = rankme(val, cell.eval.rankme_eps);
    } catch (const DataError&) {
    }
    result.cells.push_back({config.sweep.values[k], rm, probe.best});
  }
  std::vector<double> r, p;
  for (const SweepCell& c : result.cells) {
    r.push_back(c.rankme);
    p.push_back(c.probe_accuracy);
  }
  result.spearman = spearman(r, p);
  std::ofstream(root / "sweep.csv", std::ios::binary) << format_sweep_csv(result);
  std::ofstream(root / "sweep_summary.txt", std::ios::binary) << format_sweep_summary(result);
  return result;
}

std::string format_sweep_csv(const SweepResult& result) {
  std::string out = "key,value,rankme,probe_accuracy\n";
  for (const SweepCell& c : result.cells) {
    out += fmt::format("{},{},{:.17g},{:.17g}\n", result.key, c.value, c.rankme, c.probe_accuracy);
  }
  return out;
}

std::string format_sweep_summary(const SweepResult& result) {
  return fmt::format("key {}\ncells {}\nspearman {}\n", result.key, result.cells.size(),
                     result.spearman ? fmt::format("{:.17g}", *result.spearman) : "undefined");
}

}  // namespace sslforge
