#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "criteria.h"
#include "sslforge/common/rng.h"
#include "sslforge/harness/config.h"
#include "sslforge/harness/evaluate.h"
#include "sslforge/harness/pretrain.h"
#include "sslforge/harness/sweep.h"
#include "sslforge/models/encoder.h"
#include "sslforge_cli/cli.h"

namespace sslforge::acceptance {
namespace {

namespace fs = std::filesystem;

ExperimentConfig config(ConfigEntries entries, const fs::path& dir) {
  entries["run.output_dir"] = dir.string();
  entries["run.dump_embeddings"] = "false";
  return resolve_config(entries);
}

double final_projector_rankme(const PretrainResult& r) {
  for (auto it = r.metrics.rbegin(); it != r.metrics.rend(); ++it) {
    if (it->rankme_projector) return *it->rankme_projector;
  }
  return std::nan("");
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Blanks the wall_time column of a metrics CSV and wall_time rows of plot data.
std::string strip_timing(const std::string& name, const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  std::optional<std::size_t> column;
  bool first = true;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (first && name == "metrics.csv") {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (cells[i] == "wall_time") column = i;
      }
    }
    first = false;
    if (column && *column < cells.size()) cells[*column].clear();
    if (cells.size() == 4 && cells[2] == "wall_time") continue;
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
    out += "\n";
  }
  return out;
}

// Subcommand stdout plus every file under `dir`, timing fields removed.
std::map<std::string, std::string> snapshot(const std::string& stdout_text, const fs::path& dir) {
  std::map<std::string, std::string> files{{"<stdout>", strip_timing("", stdout_text)}};
  if (!dir.empty() && fs::exists(dir)) {
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string name = entry.path().filename().string();
      files[fs::relative(entry.path(), dir).string()] = strip_timing(name, read_file(entry.path()));
    }
  }
  return files;
}

}  // namespace

Outcome collapse_reproduction(const Context& ctx) {
  const auto start = std::chrono::steady_clock::now();
  const ConfigEntries base = {{"run.method", "vicreg"},
                              {"run.epochs", "5"},
                              {"data.image_size", "16"},
                              {"data.train_size", "16384"},
                              {"optim.warmup_epochs", "1"},
                              {"model.projector", "128,16"},
                              {"loss.inv", "1.5625"}};
  ConfigEntries vic = base, inv = base;
  vic["loss.var"] = "25";
  vic["loss.cov"] = "10";
  inv["loss.var"] = "0";
  inv["loss.cov"] = "0";
  const ExperimentConfig inv_config = config(inv, ctx.workdir / "collapse_invariance");
  const ExperimentConfig vic_config = config(vic, ctx.workdir / "collapse_vicreg");
  const double r_inv = final_projector_rankme(run_pretrain(inv_config));
  const double r_vic = final_projector_rankme(run_pretrain(vic_config));
  const double d = static_cast<double>(vic_config.model.projector_dim());
  const double secs = seconds_since(start);
  return {r_inv <= 1.5 && r_vic >= 0.5 * d && secs < 300.0,
          fmt::format("projector RankMe invariance-only {:.4f} (<= 1.5), with var+cov {:.3f} "
                      "(>= {:.1f}); both runs {:.0f} s",
                      r_inv, r_vic, 0.5 * d, secs)};
}

Outcome learning_signal(const Context& ctx) {
  const auto start = std::chrono::steady_clock::now();
  const ExperimentConfig simclr = config({{"run.method", "simclr"}}, ctx.workdir / "simclr");
  const PretrainResult trained = run_pretrain(simclr);
  const Datasets data = load_datasets(simclr);
  const TapReport t = evaluate_encoder(simclr, trained.checkpoint.student, data).at("backbone");
  const TapReport r =
      evaluate_encoder(simclr, init_encoder(simclr.model, derive_seed(simclr.run.seed, 4)), data)
          .at("backbone");
  const double knn_gain = 100.0 * (t.knn_accuracy - r.knn_accuracy);
  const double probe_gain = 100.0 * (t.linear_final - r.linear_final);

  const ExperimentConfig byol = config({{"run.method", "byol"}}, ctx.workdir / "byol");
  const ExperimentConfig no_pred =
      config({{"run.method", "byol"}, {"model.predictor", "none"}}, ctx.workdir / "byol_nopred");
  const double r_byol = final_projector_rankme(run_pretrain(byol));
  const double r_nopred = final_projector_rankme(run_pretrain(no_pred));
  const double d = static_cast<double>(byol.model.projector_dim());
  const double secs = seconds_since(start);

  const bool pass = knn_gain >= 15.0 && probe_gain >= 10.0 && r_byol >= 0.3 * d &&
                    r_nopred <= 2.0 && secs < 1800.0;
  return {pass,
          fmt::format("SimCLR backbone kNN {:.3f} vs random {:.3f} (+{:.1f} pts, need 15), "
                      "linear probe {:.3f} vs {:.3f} (+{:.1f} pts, need 10); BYOL projector "
                      "RankMe {:.3f} (need >= {:.1f}), without predictor {:.3f} (need <= 2)",
                      t.knn_accuracy, r.knn_accuracy, knn_gain, t.linear_final, r.linear_final,
                      probe_gain, r_byol, 0.3 * d, r_nopred)};
}

Outcome rankme_sweep(const Context& ctx) {
  ConfigEntries e = {{"run.method", "simclr"},
                     {"sweep.key", "loss.tau"},
                     {"sweep.values", "0.05,0.1,0.2,0.5,1.0"},
                     {"sweep.epochs", "5"}};
  const SweepResult r = run_hparam_sweep(config(e, ctx.workdir / "sweep"));
  std::string cells;
  for (const SweepCell& c : r.cells) {
    cells += fmt::format(" tau={}:{:.2f}/{:.3f}", c.value, c.rankme, c.probe_accuracy);
  }
  return {r.spearman.has_value() && *r.spearman > 0.0,
          fmt::format("spearman {} over (RankMe/probe){}",
                      r.spearman ? fmt::format("{:.3f}", *r.spearman) : "undefined", cells)};
}

Outcome determinism(const Context& ctx) {
  const fs::path dir = ctx.workdir / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path ini = dir / "tiny.ini";
  std::ofstream(ini) << "[run]\nmethod = simclr\nepochs = 2\nlog_every = 3\noutput_dir = "
                     << (dir / "run").string()
                     << "\n[data]\ntrain_size = 64\nval_size = 32\nimage_size = 16\n"
                        "[model]\ntrunk = mlp\ntrunk_widths = 32,16\nprojector = 16,8\n"
                        "[dist]\nper_device_batch = 16\n[eval]\nprobe_epochs = 5\n"
                        "rankme_samples = 32\nknn_k = 5\n[sweep]\nvalues = 0.1,0.5\nepochs = 1\n";
  const std::string emb = (dir / "run" / "embeddings").string();
  struct Command {
    std::string name;
    std::vector<std::string> args;
    fs::path outputs;
  };
  const std::vector<Command> commands = {
      {"pretrain", {"pretrain", ini.string()}, dir / "run"},
      {"eval",
       {"eval", ini.string(), (dir / "run" / "checkpoint").string(), "--set",
        "run.output_dir=" + (dir / "eval").string()},
       dir / "eval"},
      {"sweep",
       {"sweep", ini.string(), "--set", "run.output_dir=" + (dir / "sweep").string()},
       dir / "sweep"},
      {"rankme", {"rankme", emb + "/val_projector.sslt"}, {}},
      {"knn", {"knn", emb + "/val_backbone.sslt", emb + "/labels_val.sslt"}, {}},
      {"probe",
       {"probe", emb + "/train_backbone.sslt", emb + "/labels_train.sslt", "--query",
        emb + "/val_backbone.sslt", "--query-labels", emb + "/labels_val.sslt", "--epochs", "20"},
       {}},
      {"schedule", {"schedule", "--dump", ini.string()}, {}},
      {"plotdata", {"plotdata", (dir / "run" / "metrics.csv").string()}, {}},
  };
  std::vector<std::string> same, differ;
  for (const Command& c : commands) {
    std::map<std::string, std::string> runs[2];
    bool ok = true;
    for (auto& snap : runs) {
      if (!c.outputs.empty()) fs::remove_all(c.outputs);
      std::ostringstream out, err;
      ok = ok && cli::run_cli(c.args, out, err) == cli::kExitOk;
      snap = snapshot(out.str(), c.outputs);
    }
    (ok && runs[0] == runs[1] ? same : differ).push_back(c.name);
  }
  std::string detail = fmt::format("{} subcommands bit-identical across reruns (wall_time excluded)",
                                   same.size());
  if (!differ.empty()) {
    detail += "; differing or failing:";
    for (const std::string& n : differ) detail += " " + n;
  }
  return {differ.empty(), detail};
}

}  // namespace sslforge::acceptance
