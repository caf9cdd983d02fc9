#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "sslforge/harness/config.h"
#include "sslforge/harness/evaluate.h"
#include "sslforge/harness/plotdata.h"
#include "sslforge/harness/pretrain.h"
#include "sslforge/harness/sweep.h"
#include "sslforge/tensor/io.h"

namespace sslforge {
namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "sslforge_harness_test" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ConfigEntries tiny(const std::string& name) {
  return {{"run.epochs", "2"},
          {"run.output_dir", scratch(name).string()},
          {"run.log_every", "3"},
          {"run.wall_time", "false"},
          {"data.train_size", "64"},
          {"data.val_size", "32"},
          {"data.image_size", "16"},
          {"aug.local_size", "8"},
          {"model.trunk", "mlp"},
          {"model.trunk_widths", "32,16"},
          {"model.projector", "16,8"},
          {"dist.per_device_batch", "16"},
          {"optim.warmup_epochs", "1"},
          {"eval.probe_epochs", "5"},
          {"eval.rankme_samples", "32"},
          {"eval.knn_k", "5"}};
}

ConfigEntries with(ConfigEntries e, const ConfigEntries& more) {
  for (const auto& [k, v] : more) e[k] = v;
  return e;
}

TEST(Config, DefaultsResolveAndEchoRoundTrips) {
  const ExperimentConfig c = resolve_config({});
  EXPECT_EQ(c.run.method, "simclr");
  EXPECT_EQ(c.loss.family, "nt_xent");
  EXPECT_EQ(c.model.trunk, TrunkKind::kConv);
  const ExperimentConfig again = resolve_config(parse_config_text(echo_config(c)));
  EXPECT_EQ(again.entries, c.entries);
  EXPECT_EQ(echo_config(again), echo_config(c));
}

TEST(Config, EchoListsEveryKey) {
  const ExperimentConfig c = resolve_config({});
  const ConfigEntries parsed = parse_config_text(echo_config(c));
  EXPECT_EQ(parsed.size(), c.entries.size());
}

TEST(Config, UnknownKeysAndSectionsRejected) {
  EXPECT_THROW(parse_config_text("[run]\nepochz = 3\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[nope]\nepochs = 3\n"), ConfigError);
  EXPECT_THROW(parse_config_text("epochs = 3\n"), ConfigError);
  EXPECT_THROW(parse_config_text("[run\n"), ConfigError);
  EXPECT_THROW(resolve_config({{"run.bogus", "1"}}), ConfigError);
}

TEST(Config, BadValuesRejected) {
  EXPECT_THROW(resolve_config({{"run.epochs", "three"}}), ConfigError);
  EXPECT_THROW(resolve_config({{"run.epochs", "0"}}), ConfigError);
  EXPECT_THROW(resolve_config({{"loss.tau", "-1"}}), ConfigError);
  EXPECT_THROW(resolve_config({{"loss.tau", "nan"}}), ConfigError);
  EXPECT_THROW(resolve_config({{"run.method", "moco"}}), ConfigError);
  EXPECT_THROW(resolve_config({{"loss.family", "hinge"}}), ConfigError);
  EXPECT_THROW(resolve_config({{"aug.flip_p", "1.5"}}), ConfigError);
  EXPECT_THROW(resolve_config({{"run.wall_time", "maybe"}}), ConfigError);
  EXPECT_THROW(resolve_config({{"dist.per_device_batch", "2048"}}), ConfigError);
  EXPECT_THROW(resolve_config({{"loss.family", "generalized"}, {"loss.phi_psi", "nope"}}),
               ConfigError);
  EXPECT_THROW(resolve_config({{"run.method", "vicreg"}, {"aug.local_crops", "2"}}),
               ConfigError);
  EXPECT_THROW(resolve_config({{"loss.family", "byol"}}), ConfigError);
  EXPECT_THROW(resolve_config({{"sweep.key", "sweep.epochs"}}), ConfigError);
}

TEST(Config, PresetsExpandAndUserWins) {
  const ExperimentConfig byol = resolve_config({{"run.method", "byol"}});
  EXPECT_EQ(byol.loss.family, "byol");
  EXPECT_TRUE(byol.ema.enabled);
  EXPECT_TRUE(byol.model.predictor.has_value());
  const ExperimentConfig no_pred =
      resolve_config({{"run.method", "byol"}, {"model.predictor", "none"}});
  EXPECT_FALSE(no_pred.model.predictor.has_value());
  const ExperimentConfig dino = resolve_config({{"run.method", "dino"}});
  EXPECT_EQ(dino.aug.local_crops, 2u);
  for (const std::string& name : method_presets()) {
    EXPECT_NO_THROW(resolve_config({{"run.method", name}})) << name;
  }
}

TEST(Config, PixelsTokenResolvesToInputWidth) {
  const ExperimentConfig mae = resolve_config({{"run.method", "mae-toy"}});
  EXPECT_EQ(mae.model.projector_dim(), 3u * 24 * 24);
  const ExperimentConfig mlp =
      resolve_config({{"model.trunk", "mlp"}, {"data.image_size", "16"}});
  EXPECT_EQ(mlp.model.input_dim, 3u * 16 * 16);
}

TEST(Config, SeedEnvironmentOverride) {
  ::setenv("SSLFORGE_SEED", "77", 1);
  const ExperimentConfig c = resolve_config({{"run.seed", "5"}});
  ::unsetenv("SSLFORGE_SEED");
  EXPECT_EQ(c.run.seed, 77u);
  EXPECT_EQ(resolve_config({{"run.seed", "5"}}).run.seed, 5u);
}

TEST(Config, OverrideAndModelHash) {
  const ExperimentConfig c = resolve_config({});
  const ExperimentConfig t = with_override(c, "loss.tau", "0.5");
  EXPECT_DOUBLE_EQ(t.loss.tau, 0.5);
  EXPECT_EQ(model_hash(t), model_hash(c));
  EXPECT_NE(model_hash(with_override(c, "model.projector", "32,16")), model_hash(c));
  EXPECT_THROW(with_override(c, "loss.nope", "1"), ConfigError);
}

TEST(Metrics, CsvRoundTrip) {
  MetricsRecord a;
  a.step = 3;
  a.loss = 0.1 + 0.2;
  a.inv = 1.0 / 3.0;
  a.lr = 1e-3;
  MetricsRecord b = a;
  b.step = 6;
  b.rankme_backbone = 12.5;
  b.online_probe_acc = 0.75;
  const std::vector<MetricsRecord> rows{a, b};
  EXPECT_EQ(parse_metrics_csv(format_metrics_csv(rows)), rows);
  EXPECT_TRUE(parse_metrics_csv(format_metrics_csv({})).empty());
}

TEST(Pretrain, BitIdenticalReruns) {
  const auto first = resolve_config(tiny("det_a"));
  const auto second = resolve_config(tiny("det_b"));
  run_pretrain(first);
  run_pretrain(second);
  for (const char* file : {"metrics.csv", "resolved_config.ini", "embeddings/val_projector.sslt",
                           "embeddings/manifest.txt", "checkpoint/student.projector.l1.w.sslt"}) {
    const std::string a = slurp(first.run.output_dir / file);
    EXPECT_FALSE(a.empty()) << file;
    if (std::string(file) == "resolved_config.ini") continue;
    EXPECT_EQ(a, slurp(second.run.output_dir / file)) << file;
  }
}

TEST(Pretrain, SeedChangesTheRun) {
  const auto a = run_pretrain(resolve_config(tiny("seed_a")));
  const auto b = run_pretrain(resolve_config(with(tiny("seed_b"), {{"run.seed", "9"}})));
  EXPECT_NE(a.metrics.back().loss, b.metrics.back().loss);
}

TEST(Pretrain, MetricsCadenceAndColumns) {
  const auto c = resolve_config(with(tiny("cadence"), {{"run.method", "vicreg"}}));
  const PretrainResult r = run_pretrain(c);
  EXPECT_EQ(r.steps, 8u);
  std::vector<std::size_t> steps;
  for (const auto& m : r.metrics) steps.push_back(m.step);
  EXPECT_EQ(steps, (std::vector<std::size_t>{3, 4, 6, 8}));
  for (const auto& m : r.metrics) {
    EXPECT_TRUE(m.inv && m.var && m.cov);
    EXPECT_FALSE(m.diag || m.recon || m.ema_xi);
    EXPECT_EQ(m.wall_time, 0.0);
    EXPECT_EQ(m.rankme_backbone.has_value(), m.step % 4 == 0);
  }
  EXPECT_NEAR(*r.metrics[1].inv + *r.metrics[1].var + *r.metrics[1].cov, r.metrics[1].loss,
              1e-12);
  EXPECT_EQ(parse_metrics_csv(slurp(c.run.output_dir / "metrics.csv")), r.metrics);
}

TEST(Pretrain, ResolvedEchoReproducesTheRun) {
  const auto c = resolve_config(tiny("echo_a"));
  run_pretrain(c);
  ConfigEntries e = read_config_file(c.run.output_dir / "resolved_config.ini");
  e["run.output_dir"] = scratch("echo_b").string();
  const auto again = resolve_config(e);
  run_pretrain(again);
  EXPECT_EQ(slurp(c.run.output_dir / "metrics.csv"), slurp(again.run.output_dir / "metrics.csv"));
}

TEST(Pretrain, NonFiniteLossAborts) {
  const auto c = resolve_config(with(tiny("nan"), {{"run.method", "vicreg"},
                                                   {"optim.kind", "sgd"},
                                                   {"optim.base_lr", "1e300"},
                                                   {"optim.warmup_epochs", "0"}}));
  try {
    run_pretrain(c);
    FAIL() << "expected TrainingAbort";
  } catch (const TrainingAbort& e) {
    EXPECT_GE(e.step(), 2u);
    EXPECT_TRUE(e.terms().contains("loss"));
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
}

TEST(Pretrain, TeacherMethodsRecordEma) {
  const auto c = resolve_config(with(tiny("byol"), {{"run.method", "byol"},
                                                    {"model.predictor", "8,8"}}));
  const PretrainResult r = run_pretrain(c);
  ASSERT_TRUE(r.checkpoint.teacher.has_value());
  EXPECT_TRUE(r.checkpoint.teacher->same_layout(r.checkpoint.student));
  double previous = 0.0;
  for (const auto& m : r.metrics) {
    ASSERT_TRUE(m.ema_xi.has_value());
    EXPECT_GE(*m.ema_xi, previous);
    previous = *m.ema_xi;
  }
  EXPECT_DOUBLE_EQ(previous, 1.0);
  EXPECT_TRUE(r.metrics.back().rankme_predictor.has_value());
}

TEST(TrainingSchedule, MatchesLoggedValues) {
  const auto c = resolve_config(with(tiny("schedule"), {{"run.method", "byol"},
                                                        {"model.predictor", "8,8"}}));
  const PretrainResult r = run_pretrain(c);
  const TrainingSchedule s = training_schedule(c, c.data.train_size);
  EXPECT_EQ(s.total_steps, r.steps);
  for (const auto& m : r.metrics) {
    EXPECT_EQ(s.lr(m.step - 1), m.lr) << m.step;
    EXPECT_EQ(s.ema_xi(m.step - 1), m.ema_xi) << m.step;
  }
}

TEST(TrainingSchedule, WarmupCosineShapeAndCsv) {
  const auto c = resolve_config(with(tiny("schedule_csv"), {{"run.epochs", "10"},
                                                            {"optim.warmup_epochs", "2"},
                                                            {"optim.base_lr", "0.5"}}));
  const TrainingSchedule s = training_schedule(c, 64);
  EXPECT_EQ(s.steps_per_epoch, 4u);
  EXPECT_EQ(s.total_steps, 40u);
  EXPECT_EQ(s.warmup, 8u);
  EXPECT_EQ(s.lr(0), 0.0);
  EXPECT_DOUBLE_EQ(s.lr(4), 0.25);
  EXPECT_DOUBLE_EQ(s.lr(8), 0.5);
  EXPECT_NEAR(s.lr(24), 0.25, 1e-12);
  for (std::size_t k = 9; k < 40; ++k) EXPECT_LT(s.lr(k), s.lr(k - 1));
  EXPECT_FALSE(s.ema_xi(0).has_value());

  const std::string csv = format_schedule_csv(s);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,lr,ema_xi");
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(line.substr(0, line.find(',')), std::to_string(rows));
    EXPECT_EQ(line.back(), ',');
    ++rows;
  }
  EXPECT_EQ(rows, 40u);

  const TrainingSchedule short_run =
      training_schedule(with_override(c, "run.epochs", "1"), 64);
  EXPECT_EQ(short_run.warmup, 2u);
}

TEST(Pretrain, MultiCropPairCount) {
  const auto c = resolve_config(with(tiny("dino"), {{"run.method", "dino"},
                                                    {"run.epochs", "1"},
                                                    {"model.trunk", "conv"},
                                                    {"model.conv_channels", "4,8"},
                                                    {"run.dump_embeddings", "false"}}));
  const PretrainResult r = run_pretrain(c);
  EXPECT_EQ(r.pairs_per_sample, 2u * (c.aug.local_crops + 1));
  EXPECT_EQ(r.checkpoint.center.size(), c.model.projector_dim());
}

TEST(Pretrain, MaskedReconstructionAndWorldSize) {
  const auto mae = resolve_config(with(tiny("mae"), {{"run.method", "mae-toy"},
                                                     {"model.projector", "16,pixels"},
                                                     {"run.epochs", "1"}}));
  const PretrainResult r = run_pretrain(mae);
  EXPECT_TRUE(r.metrics.back().recon.has_value());
  const auto sharded = resolve_config(with(tiny("k2"), {{"dist.world_size", "2"},
                                                        {"dist.per_device_batch", "8"}}));
  const auto single = resolve_config(tiny("k1"));
  const auto a = run_pretrain(sharded);
  const auto b = run_pretrain(single);
  EXPECT_EQ(a.steps, b.steps);
  EXPECT_NEAR(a.metrics.front().loss, b.metrics.front().loss, 1e-9);
}

TEST(Pretrain, NnclrAndGeneralizedRun) {
  for (const ConfigEntries& extra :
       {ConfigEntries{{"run.method", "nnclr"}, {"loss.queue_size", "32"}},
        ConfigEntries{{"loss.family", "generalized"}, {"loss.phi_psi", "infonce"}},
        ConfigEntries{{"run.method", "barlow"}}, ConfigEntries{{"run.method", "simsiam"}, {"model.predictor", "8,8"}}}) {
    const auto c = resolve_config(with(with(tiny("misc"), extra), {{"run.epochs", "1"}}));
    const PretrainResult r = run_pretrain(c);
    EXPECT_TRUE(std::isfinite(r.metrics.back().loss)) << c.loss.family;
  }
}

TEST(Eval, ReportContract) {
  const auto c = resolve_config(tiny("eval"));
  run_pretrain(c);
  const EvalReport report = run_eval(c, c.run.output_dir / "checkpoint");
  ASSERT_EQ(report.taps.size(), 2u);
  for (const TapReport& t : report.taps) {
    EXPECT_GE(t.rankme, 1.0 - 1e-9);
    EXPECT_LE(t.rankme, static_cast<double>(std::min(report.val_size, t.dim)) + 1e-9);
    EXPECT_GE(t.knn_accuracy, 0.0);
    EXPECT_LE(t.linear_final, 1.0);
  }
  const std::string json = slurp(c.run.output_dir / "eval_report.json");
  EXPECT_NE(json.find("\"backbone\""), std::string::npos);
  EXPECT_NE(json.find("\"projector\""), std::string::npos);
  const auto other = with_override(c, "model.projector", "16,4");
  EXPECT_THROW(run_eval(other, c.run.output_dir / "checkpoint"), ConfigError);
}

TEST(Eval, EmbeddingDumpMatchesEncoder) {
  const auto c = resolve_config(tiny("dump"));
  const PretrainResult r = run_pretrain(c);
  const Datasets data = load_datasets(c);
  const TapEmbeddings emb = embed_dataset(c.model, r.checkpoint.student, data.val.images);
  const Tensor dumped = load_tensor(c.run.output_dir / "embeddings" / "val_backbone.sslt");
  EXPECT_EQ(dumped.vec(), emb.backbone.vec());
  const Tensor labels = load_tensor(c.run.output_dir / "embeddings" / "labels_val.sslt");
  ASSERT_EQ(labels.size(), data.val.size());
  for (std::size_t i = 0; i < labels.size(); ++i) EXPECT_EQ(labels[i], data.val.labels[i]);
}

TEST(Sweep, SpearmanClosedForms) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const std::vector<double> up{10, 20, 25, 40, 100};
  const std::vector<double> down{5, 4, 3, 2, 1};
  EXPECT_NEAR(*spearman(x, up), 1.0, 1e-15);
  EXPECT_NEAR(*spearman(x, down), -1.0, 1e-15);
  // ranks of {1, 2, 2, 3}: 1, 2.5, 2.5, 4
  const std::vector<double> a{1, 2, 2, 3};
  const std::vector<double> b{1, 2, 3, 4};
  const double ra[] = {1, 2.5, 2.5, 4}, rb[] = {1, 2, 3, 4};
  double sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < 4; ++i) {
    sab += (ra[i] - 2.5) * (rb[i] - 2.5);
    saa += (ra[i] - 2.5) * (ra[i] - 2.5);
    sbb += (rb[i] - 2.5) * (rb[i] - 2.5);
  }
  EXPECT_NEAR(*spearman(a, b), sab / std::sqrt(saa * sbb), 1e-15);
  EXPECT_FALSE(spearman(std::vector<double>{1}, std::vector<double>{2}).has_value());
  EXPECT_FALSE(spearman(std::vector<double>{1, 1}, std::vector<double>{2, 3}).has_value());
}

TEST(Sweep, OneCellGridIsUndefined) {
  const auto c = resolve_config(with(tiny("sweep1"), {{"sweep.values", "0.2"},
                                                      {"sweep.epochs", "1"}}));
  const SweepResult r = run_hparam_sweep(c);
  ASSERT_EQ(r.cells.size(), 1u);
  EXPECT_FALSE(r.spearman.has_value());
  EXPECT_NE(slurp(c.run.output_dir / "sweep_summary.txt").find("spearman undefined"),
            std::string::npos);
}

TEST(Sweep, DeterministicUnderSeed) {
  const auto a = resolve_config(with(tiny("sweep_a"), {{"sweep.values", "0.1,0.5"},
                                                       {"sweep.epochs", "1"}}));
  const auto b = with_override(a, "run.output_dir", scratch("sweep_b").string());
  const SweepResult ra = run_hparam_sweep(a);
  const SweepResult rb = run_hparam_sweep(b);
  EXPECT_EQ(format_sweep_csv(ra), format_sweep_csv(rb));
  EXPECT_EQ(ra.cells.size(), 2u);
}

TEST(PlotData, EmptyMetricsGiveHeaderOnly) {
  const auto dir = scratch("plot_empty");
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "metrics.csv") << format_metrics_csv({});
  const std::vector<std::filesystem::path> files{dir / "metrics.csv"};
  EXPECT_EQ(emit_plot_data(files), "run,step,metric,value\n");
  EXPECT_EQ(emit_plot_data({}), "run,step,metric,value\n");
}

TEST(PlotData, RunsGetDistinctIdsAndRoundTrip) {
  const auto root = scratch("plot_runs");
  const auto a = root / "x" / "same";
  const auto b = root / "y" / "same";
  std::filesystem::create_directories(a);
  std::filesystem::create_directories(b);
  MetricsRecord r1;
  r1.step = 10;
  r1.loss = 1.0 / 7.0;
  r1.lr = 0.01;
  MetricsRecord r2 = r1;
  r2.step = 20;
  r2.rankme_projector = 3.25;
  const std::vector<MetricsRecord> rows{r1, r2};
  std::ofstream(a / "metrics.csv") << format_metrics_csv(rows);
  std::ofstream(b / "metrics.csv") << format_metrics_csv(rows);
  const std::vector<std::filesystem::path> files{a / "metrics.csv", b / "metrics.csv"};
  const auto parsed = parse_plot_data(emit_plot_data(files));

  std::set<std::string> runs;
  for (const PlotRow& p : parsed) runs.insert(p.run);
  EXPECT_EQ(runs, (std::set<std::string>{"same", "same-2"}));

  // Rebuild the source rows from the long format.
  std::map<std::size_t, std::map<std::string, double>> by_step;
  for (const PlotRow& p : parsed) {
    if (p.run == "same") by_step[p.step][p.metric] = std::stod(p.value);
  }
  ASSERT_EQ(by_step.size(), 2u);
  EXPECT_EQ(by_step[10].at("loss"), r1.loss);
  EXPECT_EQ(by_step[10].at("lr"), r1.lr);
  EXPECT_FALSE(by_step[10].contains("rankme_projector"));
  EXPECT_EQ(by_step[20].at("rankme_projector"), 3.25);
  EXPECT_EQ(by_step[20].size(), 5u);  // epoch, loss, lr, rankme_projector, wall_time
  EXPECT_EQ(format_plot_data(parsed), emit_plot_data(files));
}

}  // namespace
}  // namespace sslforge
