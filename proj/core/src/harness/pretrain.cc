#include "sslforge/harness/pretrain.h"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <future>
#include <sstream>

#include <fmt/format.h>

#include "sslforge/common/rng.h"
#include "sslforge/data/augment.h"
#include "sslforge/dist/virtual.h"
#include "sslforge/eval/knn.h"
#include "sslforge/eval/probe.h"
#include "sslforge/eval/spectrum.h"
#include "sslforge/losses/cca.h"
#include "sslforge/losses/contrastive.h"
#include "sslforge/losses/noncontrastive.h"
#include "sslforge/losses/unified.h"
#include "sslforge/models/teacher.h"
#include "sslforge/optim/optimizer.h"
#include "sslforge/optim/schedule.h"
#include "sslforge/tensor/io.h"
#include "sslforge/tensor/ops.h"

namespace sslforge {
namespace {

std::string cell(double v) { return fmt::format("{:.17g}", v); }
std::string cell(const std::optional<double>& v) { return v ? cell(*v) : std::string(); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out(1);
  for (char ch : line) {
    if (ch == ',') {
      out.emplace_back();
    } else if (ch != '\r') {
      out.back() += ch;
    }
  }
  return out;
}

double parse_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw DataError(fmt::format("metrics: '{}' is not a number", s));
  }
  return v;
}

std::optional<double> parse_optional(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return parse_double(s);
}

bool is_contrastive(const std::string& family) {
  return family == "nt_xent" || family == "info_nce" || family == "dcl" || family == "nnclr" ||
         family == "generalized" || family == "contrastive" || family == "triplet" ||
         family == "nca" || family == "tuple";
}

std::size_t view_count(const ExperimentConfig& c) {
  if (c.loss.family == "mae") return 1;
  return 2 + c.aug.local_crops;
}

struct Batch {
  std::vector<Tensor> views;
  std::vector<Label> labels;
  Tensor recon_target;
  std::vector<std::uint8_t> recon_mask;
};

Batch build_batch(const ExperimentConfig& c, const LabeledImages& train,
                  std::vector<std::size_t> index, std::size_t epoch) {
  const MultiCropPolicy policy{c.aug.global, c.aug.local};
  const std::size_t v_count = view_count(c);
  const bool mae = c.loss.family == "mae";
  std::vector<std::vector<Image>> per_view(v_count);
  std::vector<Image> originals;
  Batch b;
  for (std::size_t i : index) {
    Rng rng(derive_seed(c.run.seed, 3, epoch, i));
    ViewSet vs = make_views(train.images[i], policy, mae ? 0 : c.aug.local_crops, rng);
    b.labels.push_back(train.labels[i]);
    if (mae) {
      const MaskedImage m = mask_patches(vs.view(0), c.aug.mask_patch, c.aug.mask_ratio, rng);
      for (double w : m.pixel_mask(m.image.channels)) b.recon_mask.push_back(w != 0.0 ? 1 : 0);
      originals.push_back(vs.view(0));
      per_view[0].push_back(m.image);
    } else {
      for (std::size_t v = 0; v < v_count; ++v) per_view[v].push_back(vs.view(v));
    }
  }
  for (const auto& imgs : per_view) b.views.push_back(encoder_input(c.model, imgs));
  if (mae) b.recon_target = images_to_flat(originals);
  return b;
}

std::optional<double> safe_rankme(const Tensor& z, double eps) {
  try {
    return rankme(z, eps);
  } catch (const DataError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(fmt::format("cannot write {}", path.string()));
  out << text;
}

}  // namespace

std::string format_metrics_csv(std::span<const MetricsRecord> rows) {
  std::string out;
  for (std::size_t k = 0; k < kMetricsColumns.size(); ++k) {
    out += (k ? "," : "") + std::string(kMetricsColumns[k]);
  }
  out += "\n";
  for (const MetricsRecord& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.step, r.epoch,
                       cell(r.loss), cell(r.inv), cell(r.var), cell(r.cov), cell(r.diag),
                       cell(r.offdiag), cell(r.recon), cell(r.lr), cell(r.ema_xi),
                       cell(r.rankme_backbone), cell(r.rankme_projector),
                       cell(r.rankme_predictor), cell(r.online_probe_acc), cell(r.wall_time));
  }
  return out;
}

std::vector<MetricsRecord> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) return {};
  const auto header = split_csv_line(line);
  if (header.size() != kMetricsColumns.size() ||
      !std::equal(header.begin(), header.end(), kMetricsColumns.begin())) {
    throw DataError("metrics: unexpected header");
  }
  std::vector<MetricsRecord> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != kMetricsColumns.size()) throw DataError("metrics: wrong field count");
    MetricsRecord r;
    r.step = static_cast<std::size_t>(parse_double(f[0]));
    r.epoch = static_cast<std::size_t>(parse_double(f[1]));
    r.loss = parse_double(f[2]);
    r.inv = parse_optional(f[3]);
    r.var = parse_optional(f[4]);
    r.cov = parse_optional(f[5]);
    r.diag = parse_optional(f[6]);
    r.offdiag = parse_optional(f[7]);
    r.recon = parse_optional(f[8]);
    r.lr = parse_double(f[9]);
    r.ema_xi = parse_optional(f[10]);
    r.rankme_backbone = parse_optional(f[11]);
    r.rankme_projector = parse_optional(f[12]);
    r.rankme_predictor = parse_optional(f[13]);
    r.online_probe_acc = parse_optional(f[14]);
    r.wall_time = parse_double(f[15]);
    rows.push_back(r);
  }
  return rows;
}

TrainingAbort::TrainingAbort(std::size_t step, std::map<std::string, double> terms)
    : NumericalError([&] {
        std::string msg = fmt::format("non-finite loss at step {}:", step);
        for (const auto& [name, value] : terms) msg += fmt::format(" {}={}", name, value);
        return msg;
      }()),
      step_(step),
      terms_(std::move(terms)) {}

Datasets load_datasets(const ExperimentConfig& c) {
  if (c.data.source == "synthetic") {
    return {gen_synthetic_dataset(c.data.train_size, c.data.classes, c.data.image_size,
                                  derive_seed(c.run.seed, 1)),
            gen_synthetic_dataset(c.data.val_size, c.data.classes, c.data.image_size,
                                  derive_seed(c.run.seed, 2))};
  }
  Datasets d{load_dataset(c.data.path), load_dataset(c.data.val_path)};
  for (const LabeledImages* set : {&d.train, &d.val}) {
    if (set->size() == 0) throw DataError("dataset file is empty");
    const Image& img = set->images.front();
    if (img.height != c.data.image_size || img.width != c.data.image_size ||
        img.channels != c.data.channels) {
      throw ConfigError(fmt::format("dataset images are {}x{}x{}, config expects {}x{}x{}",
                                    img.channels, img.height, img.width, c.data.channels,
                                    c.data.image_size, c.data.image_size));
    }
  }
  if (d.train.size() < c.dist.effective_batch()) {
    throw ConfigError("effective batch exceeds the training set");
  }
  return d;
}

Tensor encoder_input(const EncoderSpec& spec, std::span<const Image> images) {
  return spec.trunk == TrunkKind::kConv ? images_to_tensor(images) : images_to_flat(images);
}

TapEmbeddings embed_dataset(const EncoderSpec& spec, const ParamSet& params,
                            std::span<const Image> images, std::size_t chunk) {
  const ParamSet frozen = params.frozen();
  std::vector<Tensor> bb, pj, pd;
  for (std::size_t begin = 0; begin < images.size(); begin += chunk) {
    const std::size_t end = std::min(images.size(), begin + chunk);
    const Taps t = encode(spec, frozen, encoder_input(spec, images.subspan(begin, end - begin)));
    bb.push_back(t.backbone);
    pj.push_back(t.projector);
    if (t.predictor) pd.push_back(*t.predictor);
  }
  TapEmbeddings out{concat_rows(bb), concat_rows(pj), std::nullopt};
  if (!pd.empty()) out.predictor = concat_rows(pd);
  return out;
}

std::vector<std::string> tap_names(const EncoderSpec& spec) {
  std::vector<std::string> names{"backbone"};
  if (spec.projector) names.push_back("projector");
  if (spec.predictor) names.push_back("predictor");
  return names;
}

const Tensor& tap(const TapEmbeddings& emb, const std::string& name) {
  if (name == "backbone") return emb.backbone;
  if (name == "projector") return emb.projector;
  if (name == "predictor" && emb.predictor) return *emb.predictor;
  throw ParameterError(fmt::format("no tap named '{}'", name));
}

void dump_embeddings(const std::filesystem::path& dir, const ExperimentConfig& config,
                     const ParamSet& params, const Datasets& data, std::size_t step) {
  std::filesystem::create_directories(dir);
  std::string manifest =
      fmt::format("sslforge-embeddings 1\nstep {}\nseed {}\n", step, config.run.seed);
  const std::pair<const char*, const LabeledImages*> splits[] = {{"train", &data.train},
                                                                 {"val", &data.val}};
  for (const auto& [split, set] : splits) {
    const TapEmbeddings emb = embed_dataset(config.model, params, set->images);
    for (const std::string& name : tap_names(config.model)) {
      const std::string file = fmt::format("{}_{}.sslt", split, name);
      save_tensor(dir / file, tap(emb, name));
      manifest += fmt::format("tap {} {} {}\n", split, name, file);
    }
    std::vector<double> labels(set->labels.begin(), set->labels.end());
    const std::string file = fmt::format("labels_{}.sslt", split);
    const std::size_t rows = labels.size();
    save_tensor(dir / file, Tensor({rows, 1}, std::move(labels)));
    manifest += fmt::format("labels {} {}\n", split, file);
  }
  write_text(dir / "manifest.txt", manifest);
}

double TrainingSchedule::lr(std::size_t step) const {
  return lr_at(step, total_steps, warmup, peak_lr);
}

std::optional<double> TrainingSchedule::ema_xi(std::size_t step) const {
  if (!ema) return std::nullopt;
  return ema_cosine ? ema_schedule(step + 1, total_steps, ema_momentum) : ema_momentum;
}

TrainingSchedule training_schedule(const ExperimentConfig& c, std::size_t train_size) {
  TrainingSchedule s;
  const std::size_t batch = c.dist.effective_batch();
  s.steps_per_epoch = train_size / batch;
  s.total_steps = s.steps_per_epoch * c.run.epochs;
  s.warmup = std::min(c.optim.warmup_epochs * s.steps_per_epoch, s.total_steps / 2);
  s.peak_lr = c.optim.lr_scaling == "none"
                  ? c.optim.base_lr
                  : scaled_lr(c.optim.base_lr, batch, parse_lr_scaling(c.optim.lr_scaling));
  s.ema = c.ema.enabled;
  s.ema_cosine = c.ema.cosine;
  s.ema_momentum = c.ema.momentum;
  return s;
}

std::string format_schedule_csv(const TrainingSchedule& s) {
  std::string out = "step,lr,ema_xi\n";
  for (std::size_t step = 0; step < s.total_steps; ++step) {
    const std::optional<double> xi = s.ema_xi(step);
    out += fmt::format("{},{:.17g},{}\n", step, s.lr(step),
                       xi ? fmt::format("{:.17g}", *xi) : std::string());
  }
  return out;
}

PretrainResult run_pretrain(const ExperimentConfig& c) {
  const auto start = std::chrono::steady_clock::now();
  const std::filesystem::path out_dir = c.run.output_dir;
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "resolved_config.ini", echo_config(c));

  const Datasets data = load_datasets(c);
  const LabeledImages& train = data.train;
  const TrainingSchedule schedule = training_schedule(c, train.size());
  const std::size_t batch = c.dist.effective_batch();
  const std::size_t steps_per_epoch = schedule.steps_per_epoch;
  const std::size_t total_steps = schedule.total_steps;

  const std::string& family = c.loss.family;
  const std::size_t n_local = view_count(c) > 2 ? view_count(c) - 2 : 0;
  const std::size_t v_count = view_count(c);
  const std::vector<ViewPair> view_pairs =
      family == "mae" ? std::vector<ViewPair>{} : multicrop_pairs(n_local);
  const bool has_predictor = c.model.predictor.has_value();

  ParamSet params = init_encoder(c.model, derive_seed(c.run.seed, 4));
  Optimizer optimizer(c.optim.optimizer);
  std::optional<TeacherState> teacher;
  if (c.ema.enabled) teacher = make_teacher(params, c.ema.momentum, c.model.projector_dim());
  std::optional<OnlineProbe> probe;
  if (c.eval.online_probe) {
    probe.emplace(c.model.backbone_dim(), train.num_classes, c.eval.online_probe_lr);
  }
  std::optional<SupportQueue> queue;
  if (family == "nnclr") queue.emplace(c.loss.queue_size, c.model.projector_dim());

  const std::size_t diag_rows = std::min(c.eval.rankme_samples, data.val.size());
  const std::span<const Image> diag_images(data.val.images.data(), diag_rows);

  PretrainResult result;
  result.pairs_per_sample = view_pairs.size();

  Rng order_rng(derive_seed(c.run.seed, 5));
  std::vector<std::vector<std::size_t>> epoch_orders;
  for (std::size_t e = 0; e < c.run.epochs; ++e) epoch_orders.push_back(order_rng.permutation(train.size()));
  const auto batch_index = [&](std::size_t step) {
    const std::size_t e = step / steps_per_epoch;
    const std::size_t k = step % steps_per_epoch;
    const auto& order = epoch_orders[e];
    return std::vector<std::size_t>(order.begin() + static_cast<std::ptrdiff_t>(k * batch),
                                    order.begin() + static_cast<std::ptrdiff_t>((k + 1) * batch));
  };
  std::deque<std::future<Batch>> prefetch;
  std::size_t next_prefetch = 0;
  const auto refill = [&] {
    while (prefetch.size() < 2 && next_prefetch < total_steps) {
      prefetch.push_back(std::async(std::launch::async, build_batch, std::cref(c),
                                    std::cref(train), batch_index(next_prefetch),
                                    next_prefetch / steps_per_epoch));
      ++next_prefetch;
    }
  };

  double ema_xi = c.ema.momentum;
  for (std::size_t step = 0; step < total_steps; ++step) {
    refill();
    Batch b = prefetch.front().get();
    prefetch.pop_front();
    const std::size_t epoch = step / steps_per_epoch;
    const double lr = schedule.lr(step);

    std::vector<Tensor> targets;
    if (teacher && (family == "byol" || family == "dino")) {
      for (std::size_t g = 0; g < 2; ++g) {
        targets.push_back(encode_without_predictor(c.model, teacher->params, b.views[g]).projector);
      }
    }

    std::map<std::string, double> terms;
    Tensor backbone_out, view0_projection;
    const ShardForward forward = [&](const ParamSet& replica, std::span<const Tensor> views) {
      std::vector<Taps> taps;
      for (const Tensor& v : views) taps.push_back(encode(c.model, replica, v));
      std::vector<Tensor> out;
      for (const Taps& t : taps) out.push_back(t.projector);
      if (has_predictor) {
        for (const Taps& t : taps) out.push_back(*t.predictor);
      }
      out.push_back(taps[0].backbone);
      return out;
    };
    const GatheredLoss loss_fn = [&](std::span<const Tensor> g) -> Tensor {
      const std::span<const Tensor> z = g.subspan(0, v_count);
      const std::span<const Tensor> p = has_predictor ? g.subspan(v_count, v_count) : z;
      backbone_out = g.back().detach();
      view0_projection = g[0].detach();
      const std::size_t n = z[0].rows();
      terms.clear();
      if (is_contrastive(family)) {
        Tensor all = concat_rows(z);
        if (c.loss.normalize) all = l2_normalize_rows(all);
        PairList pairs;
        for (const ViewPair& vp : view_pairs) {
          for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(vp.anchor * n + i, vp.other * n + i);
        }
        Tensor total;
        if (family == "nt_xent") total = nt_xent(all, pairs, c.loss.tau);
        else if (family == "info_nce") total = info_nce(all, pairs, c.loss.tau);
        else if (family == "dcl") total = dcl_loss(all, pairs, c.loss.tau);
        else if (family == "contrastive") total = contrastive_pair_loss(all, pairs, c.loss.margin);
        else if (family == "triplet") total = triplet_loss(all, pairs, c.loss.margin);
        else if (family == "nca") total = nca_loss(all, pairs);
        else if (family == "tuple") total = tuple_loss(all, pairs, c.loss.beta);
        else if (family == "generalized") {
          const auto partner = partner_map(pairs, all.rows());
          total = generalized_loss(all, partner,
                                   phi_psi_preset(c.loss.phi_psi, c.loss.tau, c.loss.epsilon,
                                                  c.loss.c));
        } else {
          if (queue->empty()) {
            SupportQueue warm(c.loss.queue_size, c.model.projector_dim());
            warm.push(z[0]);
            total = nnclr_loss(all, pairs, warm, c.loss.tau);
          } else {
            total = nnclr_loss(all, pairs, *queue, c.loss.tau);
          }
        }
        return scale(total, 1.0 / static_cast<double>(pairs.size()));
      }
      if (family == "byol" || family == "simsiam" || family == "dino") {
        std::vector<Tensor> parts;
        for (const ViewPair& vp : view_pairs) {
          if (family == "byol") parts.push_back(byol_loss(p[vp.other], targets[vp.anchor]));
          else if (family == "simsiam") parts.push_back(simsiam_loss(p[vp.other], z[vp.anchor]));
          else parts.push_back(dino_loss(z[vp.other], targets[vp.anchor], teacher->center, c.loss.dino));
        }
        Tensor total = parts[0];
        for (std::size_t k = 1; k < parts.size(); ++k) total = add(total, parts[k]);
        return scale(total, 1.0 / static_cast<double>(parts.size()));
      }
      if (family == "vicreg") {
        VicRegTerms t = vicreg_loss(z[0], z[1], c.loss.vicreg);
        terms = {{"inv", t.inv.item()}, {"var", t.var.item()}, {"cov", t.cov.item()}};
        return t.total;
      }
      if (family == "barlow") {
        BarlowTerms t = barlow_twins_loss(z[0], z[1], c.loss.lambda_offdiag);
        terms = {{"diag", t.diag.item()}, {"offdiag", t.offdiag.item()}};
        return t.total;
      }
      if (family == "dccae") {
        return dccae_correlation_objective(z[0], z[1], c.loss.penalty_weight).total;
      }
      Tensor recon = masked_recon_loss(z[0], b.recon_target, b.recon_mask);
      terms = {{"recon", recon.item()}};
      return recon;
    };

    const DataParallelResult dp =
        data_parallel_step(params, b.views, c.dist.world_size, forward, loss_fn);
    if (!std::isfinite(dp.loss)) {
      auto report = terms;
      report["loss"] = dp.loss;
      throw TrainingAbort(step + 1, report);
    }
    optimizer.step(params, dp.grads, lr);

    if (teacher) {
      ema_xi = *schedule.ema_xi(step);
      if (family == "dino") {
        teacher->center = center_update(teacher->center, concat_rows(targets),
                                        c.loss.center_momentum);
      }
      *teacher = ema_update(*teacher, params, ema_xi);
      for (std::size_t i = 0; i < teacher->params.size(); ++i) {
        if (teacher->params.at(i).has_grad()) {
          throw ContractError(fmt::format("teacher parameter {} received a gradient",
                                          teacher->params.name(i)));
        }
      }
    }
    if (queue) queue->push(view0_projection);
    if (probe) probe->step(backbone_out, b.labels);

    const std::size_t done = step + 1;
    const bool epoch_end = done % steps_per_epoch == 0;
    if (done % c.run.log_every == 0 || epoch_end) {
      MetricsRecord r;
      r.step = done;
      r.epoch = epoch;
      r.loss = dp.loss;
      const auto term = [&](const char* name) -> std::optional<double> {
        if (auto it = terms.find(name); it != terms.end()) return it->second;
        return std::nullopt;
      };
      r.inv = term("inv");
      r.var = term("var");
      r.cov = term("cov");
      r.diag = term("diag");
      r.offdiag = term("offdiag");
      r.recon = term("recon");
      r.lr = lr;
      if (teacher) r.ema_xi = ema_xi;
      if (epoch_end && (epoch + 1) % c.run.diag_every == 0) {
        const TapEmbeddings emb = embed_dataset(c.model, params, diag_images);
        r.rankme_backbone = safe_rankme(emb.backbone, c.eval.rankme_eps);
        if (c.model.projector) r.rankme_projector = safe_rankme(emb.projector, c.eval.rankme_eps);
        if (emb.predictor) r.rankme_predictor = safe_rankme(*emb.predictor, c.eval.rankme_eps);
      }
      if (probe) r.online_probe_acc = probe->running_accuracy();
      if (c.run.wall_time) {
        r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                          .count();
      }
      result.metrics.push_back(r);
    }
  }

  result.steps = total_steps;
  result.checkpoint = Checkpoint{model_hash(c), total_steps, c.run.seed, params, std::nullopt, {}};
  if (teacher) {
    result.checkpoint.teacher = teacher->params;
    result.checkpoint.center = teacher->center;
  }
  save_checkpoint(out_dir / "checkpoint", result.checkpoint);
  write_text(out_dir / "metrics.csv", format_metrics_csv(result.metrics));
  if (c.run.dump_embeddings) dump_embeddings(out_dir / "embeddings", c, params, data, total_steps);
  return result;
}

}  // namespace sslforge
