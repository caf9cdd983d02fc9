#include "sslforge_cli/cli.h"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "sslforge/common/error.h"
#include "sslforge/data/synthetic.h"
#include "sslforge/eval/knn.h"
#include "sslforge/eval/probe.h"
#include "sslforge/eval/spectrum.h"
#include "sslforge/harness/config.h"
#include "sslforge/harness/evaluate.h"
#include "sslforge/harness/plotdata.h"
#include "sslforge/harness/pretrain.h"
#include "sslforge/harness/sweep.h"
#include "sslforge/tensor/io.h"
#include "sslforge/tensor/ops.h"

namespace sslforge::cli {
namespace {

namespace fs = std::filesystem;

std::string num(double v) { return std::isfinite(v) ? fmt::format("{:.17g}", v) : "nan"; }

ExperimentConfig config_with_sets(const std::optional<fs::path>& path,
                                  const std::vector<std::string>& sets) {
  ConfigEntries user = path ? read_config_file(*path) : ConfigEntries{};
  for (const std::string& s : sets) {
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError(fmt::format("--set expects key=value, got '{}'", s));
    }
    user[s.substr(0, eq)] = s.substr(eq + 1);
  }
  return resolve_config(user);
}

std::vector<Label> load_labels(const fs::path& path) {
  const Tensor t = load_tensor(path);
  std::vector<Label> labels;
  labels.reserve(t.size());
  for (double v : t.values()) {
    if (!(v >= 0.0) || v > 65535.0 || v != std::floor(v)) {
      throw DataError(fmt::format("{}: labels must be non-negative integers", path.string()));
    }
    labels.push_back(static_cast<Label>(v));
  }
  return labels;
}

struct Split {
  Tensor train, query;
  std::vector<Label> train_labels, query_labels;
};

// Explicit query set, or the last 20% of rows held out.
Split make_split(const fs::path& emb, const fs::path& labels, const std::string& query,
                 const std::string& query_labels) {
  Split s;
  const Tensor z = load_tensor(emb);
  const std::vector<Label> y = load_labels(labels);
  if (z.rank() != 2 || z.rows() != y.size()) {
    throw DataError("embeddings must be N x d with one label per row");
  }
  if (!query.empty()) {
    if (query_labels.empty()) throw ConfigError("--query requires --query-labels");
    s.train = z;
    s.train_labels = y;
    s.query = load_tensor(query);
    s.query_labels = load_labels(query_labels);
    if (s.query.rank() != 2 || s.query.rows() != s.query_labels.size() ||
        s.query.cols() != z.cols()) {
      throw DataError("query embeddings must be M x d with one label per row");
    }
    return s;
  }
  const std::size_t n = z.rows();
  const std::size_t cut = n * 4 / 5;
  if (cut == 0 || cut == n) throw DataError("need at least 2 rows for the 80/20 split");
  s.train = slice_rows(z, 0, cut);
  s.query = slice_rows(z, cut, n);
  s.train_labels.assign(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(cut));
  s.query_labels.assign(y.begin() + static_cast<std::ptrdiff_t>(cut), y.end());
  return s;
}

void write_or_print(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError(fmt::format("cannot write {}", path));
  f << text;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"sslforge: desk-scale self-supervised learning experiments", "sslforge"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, emb_path, labels_path, query_path, query_labels_path,
      output_path;
  std::vector<std::string> sets, metrics_files;
  double eps = 1e-7, knn_t = 0.07, probe_lr = 1e-2;
  std::size_t knn_k = 20, probe_epochs = 100, hidden = 64;
  std::uint64_t probe_seed = 0;
  bool majority = false, mlp = false, dump = false;

  auto add_sets = [&](CLI::App* cmd) {
    cmd->add_option("--set", sets, "Override a config entry, section.key=value")
        ->allow_extra_args(false);
  };

  CLI::App* pretrain = app.add_subcommand("pretrain", "Train an encoder from a config");
  pretrain->add_option("config", config_path)->required()->check(CLI::ExistingFile);
  add_sets(pretrain);

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on every tap");
  eval->add_option("config", config_path)->required()->check(CLI::ExistingFile);
  eval->add_option("checkpoint", ckpt_path)->required()->check(CLI::ExistingDirectory);
  add_sets(eval);

  CLI::App* sweep = app.add_subcommand("sweep", "Short runs over sweep.values");
  sweep->add_option("config", config_path)->required()->check(CLI::ExistingFile);
  add_sets(sweep);

  CLI::App* rank = app.add_subcommand("rankme", "Spectrum diagnostics of an embedding dump");
  rank->add_option("embeddings", emb_path)->required()->check(CLI::ExistingFile);
  rank->add_option("--eps", eps);

  auto add_split = [&](CLI::App* cmd) {
    cmd->add_option("embeddings", emb_path)->required()->check(CLI::ExistingFile);
    cmd->add_option("labels", labels_path)->required()->check(CLI::ExistingFile);
    cmd->add_option("--query", query_path)->check(CLI::ExistingFile);
    cmd->add_option("--query-labels", query_labels_path)->check(CLI::ExistingFile);
  };

  CLI::App* knn = app.add_subcommand("knn", "kNN accuracy on an embedding dump");
  add_split(knn);
  knn->add_option("-k", knn_k)->check(CLI::PositiveNumber);
  knn->add_option("--temperature", knn_t)->check(CLI::PositiveNumber);
  knn->add_flag("--majority", majority);

  CLI::App* probe = app.add_subcommand("probe", "Linear or MLP probe on an embedding dump");
  add_split(probe);
  probe->add_option("--epochs", probe_epochs);
  probe->add_option("--lr", probe_lr)->check(CLI::PositiveNumber);
  probe->add_option("--hidden", hidden)->check(CLI::PositiveNumber);
  probe->add_option("--seed", probe_seed);
  probe->add_flag("--mlp", mlp);

  CLI::App* schedule = app.add_subcommand("schedule", "Per-step lr and EMA momentum");
  schedule->add_flag("--dump", dump)->required();
  schedule->add_option("config", config_path)->check(CLI::ExistingFile);
  schedule->add_option("-o,--output", output_path);
  add_sets(schedule);

  CLI::App* plot = app.add_subcommand("plotdata", "Merge metrics files into long-format CSV");
  plot->add_option("metrics", metrics_files)->check(CLI::ExistingFile);
  plot->add_option("-o,--output", output_path);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = e.get_exit_code();
    if (code == static_cast<int>(CLI::ExitCodes::Success)) {
      out << app.help();
      return kExitOk;
    }
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  const std::optional<fs::path> config_file =
      config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path);

  try {
    if (pretrain->parsed()) {
      const ExperimentConfig c = config_with_sets(config_file, sets);
      const PretrainResult r = run_pretrain(c);
      out << "steps " << r.steps << "\n";
      out << "final_loss " << num(r.metrics.empty() ? NAN : r.metrics.back().loss) << "\n";
      out << "checkpoint " << (c.run.output_dir / "checkpoint").string() << "\n";
    } else if (eval->parsed()) {
      const ExperimentConfig c = config_with_sets(config_file, sets);
      out << eval_report_json(run_eval(c, ckpt_path)) << "\n";
    } else if (sweep->parsed()) {
      const SweepResult r = run_hparam_sweep(config_with_sets(config_file, sets));
      out << format_sweep_csv(r) << format_sweep_summary(r);
    } else if (rank->parsed()) {
      const Tensor z = load_tensor(emb_path);
      const SpectrumReport s = spectrum_report(z, eps);
      out << "rows " << z.rows() << "\ncols " << z.cols() << "\n";
      out << "rankme " << num(s.rankme) << "\nalpha " << num(s.alpha) << "\n";
      out << "numeric_rank " << s.numeric_rank << "\n";
    } else if (knn->parsed()) {
      const Split s = make_split(emb_path, labels_path, query_path, query_labels_path);
      KnnOptions o;
      o.k = std::min(knn_k, s.train.rows());
      o.temperature = knn_t;
      o.mode = majority ? KnnMode::kMajority : KnnMode::kWeighted;
      const KnnResult r = knn_classify(s.train, s.train_labels, s.query, s.query_labels, o);
      out << "train " << s.train.rows() << "\nquery " << s.query.rows() << "\nk " << o.k
          << "\naccuracy " << num(r.accuracy) << "\n";
    } else if (probe->parsed()) {
      const Split s = make_split(emb_path, labels_path, query_path, query_labels_path);
      ProbeOptions o;
      o.epochs = probe_epochs;
      o.lr = probe_lr;
      o.hidden = hidden;
      o.seed = probe_seed;
      const ProbeCurve r =
          mlp ? mlp_probe(s.train, s.train_labels, s.query, s.query_labels, o)
              : linear_probe(s.train, s.train_labels, s.query, s.query_labels, o);
      out << "train " << s.train.rows() << "\nquery " << s.query.rows() << "\nprobe "
          << (mlp ? "mlp" : "linear") << "\nbest " << num(r.best) << "\nbest_epoch "
          << r.best_epoch << "\nfinal " << num(r.final) << "\n";
    } else if (schedule->parsed()) {
      const ExperimentConfig c = config_with_sets(config_file, sets);
      const std::size_t train_size =
          c.data.source == "synthetic" ? c.data.train_size : load_dataset(c.data.path).size();
      write_or_print(format_schedule_csv(training_schedule(c, train_size)), output_path, out);
    } else if (plot->parsed()) {
      const std::vector<fs::path> files(metrics_files.begin(), metrics_files.end());
      write_or_print(emit_plot_data(files), output_path, out);
    }
  } catch (const TrainingAbort& e) {
    err << "error: " << e.what() << "\n";
    for (const auto& [term, value] : e.terms()) err << "  " << term << " " << num(value) << "\n";
    return kExitNumerical;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace sslforge::cli
