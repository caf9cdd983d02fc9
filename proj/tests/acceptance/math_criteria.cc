#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "criteria.h"
#include "oracle.h"
#include "sslforge/common/rng.h"
#include "sslforge/dist/virtual.h"
#include "sslforge/eval/spectrum.h"
#include "sslforge/losses/cca.h"
#include "sslforge/losses/contrastive.h"
#include "sslforge/losses/nce.h"
#include "sslforge/losses/noncontrastive.h"
#include "sslforge/losses/unified.h"
#include "sslforge/models/encoder.h"
#include "sslforge/tensor/gradcheck.h"
#include "sslforge/tensor/ops.h"
#include "test_util.h"

namespace sslforge::acceptance {
namespace {

using testing::random_matrix;
using Fn = std::function<Tensor(const std::vector<Tensor>&)>;

struct Batch {
  Tensor z;
  PairList pairs;
  std::size_t n = 0, d = 0;
};

// Two views of n in [2, 8] samples, d in [2, 8]: at most 16 rows.
Batch random_batch(Rng& gen, std::uint64_t seed) {
  Batch b;
  b.n = 2 + gen.below(7);
  b.d = 2 + gen.below(7);
  b.z = random_matrix(2 * b.n, b.d, seed);
  b.pairs = two_view_pairs(b.n);
  return b;
}

double gaussian_log_pdf(double v, double sd) {
  return -0.5 * v * v / (sd * sd) - std::log(sd) - 0.5 * std::log(2.0 * std::numbers::pi);
}

Tensor random_orthogonal(std::size_t d, std::uint64_t seed) {
  const Tensor g = random_matrix(d, d, seed);
  Eigen::MatrixXd m(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) m(i, j) = g.at(i, j);
  }
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(m).householderQ();
  std::vector<double> v(d * d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) v[i * d + j] = q(i, j);
  }
  return Tensor({d, d}, std::move(v));
}

}  // namespace

Outcome gradient_suite(const Context&) {
  Rng gen(101);
  double worst = 0.0;
  std::string worst_name;
  std::size_t checks = 0;
  auto record = [&](const std::string& name, const Fn& f, const std::vector<Tensor>& inputs) {
    const double err = check_gradients(f, inputs).max_rel_error;
    ++checks;
    if (!(err <= worst)) {
      worst = err;
      worst_name = name;
    }
  };

  for (int trial = 0; trial < 3; ++trial) {
    const std::uint64_t seed = 5000 + 100 * static_cast<std::uint64_t>(trial);
    const Batch b = random_batch(gen, seed);
    const PairList& p = b.pairs;
    const auto partner = partner_map(p, 2 * b.n);
    SupportQueue queue(10, b.d);
    queue.push(random_matrix(10, b.d, seed + 1));

    const std::vector<std::pair<std::string, Fn>> on_z = {
        {"contrastive_pair", [&](auto& x) { return contrastive_pair_loss(x[0], p, 1.5); }},
        {"nca", [&](auto& x) { return nca_loss(x[0], p); }},
        {"triplet", [&](auto& x) { return triplet_loss(x[0], p, 0.8); }},
        {"triplet_squared", [&](auto& x) { return triplet_loss(x[0], p, 0.8, true); }},
        {"tuple", [&](auto& x) { return tuple_loss(x[0], p, 0.2); }},
        {"info_nce", [&](auto& x) { return info_nce(x[0], p, 0.3); }},
        {"nt_xent", [&](auto& x) { return nt_xent(x[0], p, 0.3); }},
        {"dcl", [&](auto& x) { return dcl_loss(x[0], p, 0.3); }},
        {"nnclr", [&](auto& x) { return nnclr_loss(x[0], p, queue, 0.3); }},
        {"generalized_nce", [&](auto& x) { return generalized_nce_loss(x[0], partner, 0.5, 1.0); }},
    };
    for (const auto& [name, f] : on_z) record(name, f, {b.z});
    for (const std::string& row : phi_psi_names()) {
      const PhiPsiSpec spec = phi_psi_preset(row, 0.7, 0.3, 1.3);
      record("generalized/" + row,
             [&](auto& x) { return generalized_loss(scale(x[0], 0.3), partner, spec); }, {b.z});
    }

    const Tensor a = random_matrix(b.n, b.d, seed + 2);
    const Tensor c = add(a, random_matrix(b.n, b.d, seed + 3, 0.3));
    const Tensor t1 = random_matrix(b.n, b.d, seed + 4), t2 = random_matrix(b.n, b.d, seed + 5);
    std::vector<double> center(b.d);
    for (double& v : center) v = gen.uniform(-0.5, 0.5);
    std::vector<std::uint8_t> mask(b.n * b.d);
    for (auto& m : mask) m = gen.bernoulli(0.5) ? 1 : 0;

    record("byol", [&](auto& x) { return byol_loss(x[0], t1); }, {a});
    record("byol_symmetric", [&](auto& x) { return byol_symmetric(x[0], x[1], t1, t2); }, {a, c});
    record("simsiam", [&](auto& x) { return simsiam_loss(x[0], t1); }, {a});
    record("simsiam_symmetric", [&](auto& x) { return simsiam_symmetric(x[0], x[1], t1, t2); },
           {a, c});
    record("dino", [&](auto& x) { return dino_loss(scale(x[0], 0.1), t1, center); }, {a});
    record("vicreg", [&](auto& x) { return vicreg_loss(x[0], x[1]).total; }, {a, c});
    record("barlow_twins", [&](auto& x) { return barlow_twins_loss(x[0], x[1]).total; }, {a, c});
    record("masked_recon", [&](auto& x) { return masked_recon_loss(x[0], t1, mask); }, {a});
    record("dccae", [&](auto& x) { return dccae_correlation_objective(x[0], x[1]).total; },
           {a, c});

    std::vector<double> data(16), noise(16);
    for (double& v : data) v = gen.normal();
    for (double& v : noise) v = gen.normal(0.0, 2.0);
    const auto noise_lp = [](double v) { return gaussian_log_pdf(v, 2.0); };
    const Tensor theta({1, 4}, {-1.0, 0.1, -0.4, 0.2});
    record("nce", [&](auto& x) { return nce_objective(x[0], data, noise, noise_lp, 0.5); },
           {theta});
  }
  return {worst < 1e-4, fmt::format("{} checks, max relative error {:.3g} ({})", checks, worst,
                                    worst_name)};
}

Outcome unified_equivalence(const Context&) {
  Rng gen(202);
  double worst_nce = 0.0, worst_triplet = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Batch b = random_batch(gen, 6000 + static_cast<std::uint64_t>(t));
    const auto partner = partner_map(b.pairs, b.z.rows());
    const auto mat = oracle::to_mat(b.z);
    const double tau = gen.uniform(0.2, 2.0);
    for (double eps : {0.0, 1.0}) {
      const double general =
          generalized_loss(b.z, partner, phi_psi_preset("infonce", tau, eps)).item();
      worst_nce = std::max(
          {worst_nce, std::abs(general - oracle::generalized_nce(mat, partner, tau, eps)),
           std::abs(general - generalized_nce_loss(b.z, partner, tau, eps).item())});
    }
    const double margin = gen.uniform(0.05, 2.0);
    const double general =
        generalized_loss(b.z, partner, phi_psi_preset("triplet", 1.0, margin)).item();
    const double offset = margin * static_cast<double>(b.z.rows());
    worst_triplet = std::max(
        {worst_triplet, std::abs(general - triplet_loss(b.z, b.pairs, margin, true).item() - offset),
         std::abs(general - oracle::triplet(mat, b.pairs, margin, true) - offset)});
  }
  return {worst_nce < 1e-9 && worst_triplet < 1e-9,
          fmt::format("100 batches: infonce row max |diff| {:.3g}, triplet row {:.3g}", worst_nce,
                      worst_triplet)};
}

Outcome denominator_algebra(const Context&) {
  Rng gen(303);
  double worst_self = 0.0, worst_pos = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Batch b = random_batch(gen, 7000 + static_cast<std::uint64_t>(t));
    const double tau = gen.uniform(0.05, 1.0);
    const auto full = info_nce_denominators(b.z, b.pairs, tau, InfoNceVariant::kInfoNce);
    const auto nt = info_nce_denominators(b.z, b.pairs, tau, InfoNceVariant::kNtXent);
    const auto dcl = info_nce_denominators(b.z, b.pairs, tau, InfoNceVariant::kDcl);
    const auto mat = oracle::to_mat(b.z);
    for (auto [i, j] : b.pairs) {
      worst_self = std::max(worst_self, std::abs(full[i] - nt[i] - std::exp(1.0 / tau)) / full[i]);
      worst_pos = std::max(
          worst_pos, std::abs(nt[i] - dcl[i] - std::exp(oracle::cosim(mat[i], mat[j]) / tau)) / nt[i]);
    }
  }
  return {worst_self <= 1e-10 && worst_pos <= 1e-10,
          fmt::format("100 batches, error relative to the denominator: self term {:.3g}, "
                      "positive term {:.3g}",
                      worst_self, worst_pos)};
}

Outcome sharding_equivalence(const Context&) {
  const std::vector<std::pair<std::string, GatheredLoss>> losses = {
      {"nt_xent",
       [](std::span<const Tensor> z) {
         return nt_xent(concat_rows(z), two_view_pairs(z[0].rows()), 0.5);
       }},
      {"vicreg", [](std::span<const Tensor> z) { return vicreg_loss(z[0], z[1]).total; }},
      {"barlow_twins",
       [](std::span<const Tensor> z) { return barlow_twins_loss(z[0], z[1]).total; }},
  };
  // Errors are scaled by max(1, |reference|): near-zero projector rows give
  // gradients up to ~1e12 through the row normalization.
  double worst_loss = 0.0, worst_grad = 0.0, largest = 0.0;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    EncoderSpec spec{.trunk = TrunkKind::kMlp, .input_dim = 6, .trunk_mlp = MlpSpec{{10, 8}, {}}};
    spec.projector = MlpSpec{{12, 5}, {}};
    spec.predictor.reset();
    const ParamSet params = init_encoder(spec, seed);
    const Tensor v1 = random_matrix(16, 6, seed + 100);
    const Tensor v2 = add(v1, random_matrix(16, 6, seed + 200, 0.2));
    const ShardForward forward = [&spec](const ParamSet& p, std::span<const Tensor> views) {
      return std::vector<Tensor>{encode(spec, p, views[0]).projector,
                                 encode(spec, p, views[1]).projector};
    };
    for (const auto& [name, loss] : losses) {
      const ParamSet mono = params.trainable();
      const Tensor l = loss(std::vector<Tensor>{encode(spec, mono, v1).projector,
                                                encode(spec, mono, v2).projector});
      backward(l);
      for (std::size_t k : {2u, 4u, 8u}) {
        const DataParallelResult dp =
            data_parallel_step(params, std::vector<Tensor>{v1, v2}, k, forward, loss);
        worst_loss =
            std::max(worst_loss, std::abs(dp.loss - l.item()) / std::max(1.0, std::abs(l.item())));
        for (std::size_t i = 0; i < mono.size(); ++i) {
          const std::vector<double> g = mono.at(i).grad();
          for (std::size_t j = 0; j < g.size(); ++j) {
            largest = std::max(largest, std::abs(g[j]));
            worst_grad =
                std::max(worst_grad, std::abs(dp.grads[i][j] - g[j]) / std::max(1.0, std::abs(g[j])));
          }
        }
      }
    }
  }
  return {worst_loss <= 1e-10 && worst_grad <= 1e-10,
          fmt::format("nt_xent/vicreg/barlow_twins, K in {{2,4,8}}: max loss diff {:.3g}, "
                      "max grad diff {:.3g} (scaled by max(1, |g|), largest |g| {:.3g})",
                      worst_loss, worst_grad, largest)};
}

Outcome linear_cca_oracle(const Context&) {
  Rng rng(404);
  const std::size_t n = 5000;
  const double a = std::sqrt(0.8), b = std::sqrt(0.2);
  std::vector<double> xv, yv;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = rng.normal();
    xv.insert(xv.end(), {a * s + b * rng.normal(), rng.normal(), rng.normal()});
    yv.insert(yv.end(), {a * s + b * rng.normal(), rng.normal()});
  }
  const double top = linear_cca(Tensor({n, 3}, xv), Tensor({n, 2}, yv), 2).correlations[0];
  const Tensor x = random_matrix(n, 4, 405);
  double worst_self = 0.0;
  for (double c : linear_cca(x, x, 4).correlations) {
    worst_self = std::max(worst_self, std::abs(c - 1.0));
  }
  return {std::abs(top - 0.8) <= 0.05 && worst_self <= 1e-6,
          fmt::format("n=5000, constructed rho 0.8 -> {:.4f}; Y=X max |rho - 1| {:.3g}", top,
                      worst_self)};
}

Outcome nce_density_recovery(const Context&) {
  const auto start = std::chrono::steady_clock::now();
  Rng rng(505);
  std::vector<double> data(20000), noise(20000);
  for (double& v : data) v = rng.normal();
  for (double& v : noise) v = rng.normal(0.0, 2.0);
  const auto noise_lp = [](double v) { return gaussian_log_pdf(v, 2.0); };
  NceFitOptions options;
  options.steps = 5000;
  const NceFitResult fit = nce_binary_fit(data, noise, noise_lp, options);
  double worst = 0.0;
  for (int k = 0; k <= 400; ++k) {
    const double v = -2.0 + 4.0 * k / 400.0;
    worst = std::max(worst, std::abs(fit.model.log_density(v) - gaussian_log_pdf(v, 1.0)));
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {worst < 0.05 && secs < 60.0,
          fmt::format("N(0,1) data, N(0,4) noise, 5000 steps: max |log p error| on [-2,2] {:.4f}",
                      worst)};
}

Outcome rankme_invariances(const Context&) {
  Rng gen(606);
  double worst_scale = 0.0, worst_rot = 0.0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + gen.below(30), d = 2 + gen.below(10);
    const Tensor z = random_matrix(n, d, 8000 + static_cast<std::uint64_t>(t));
    const double base = rankme(z, 0.0);
    worst_scale = std::max(worst_scale,
                           std::abs(rankme(scale(z, gen.uniform(1e-3, 1e3)), 0.0) - base));
    worst_rot = std::max(
        worst_rot,
        std::abs(rankme(matmul(z, random_orthogonal(d, 9000 + static_cast<std::uint64_t>(t))), 0.0) -
                 base));
  }
  bool closed = true;
  for (std::size_t d = 1; d <= 16; ++d) {
    closed = closed && std::abs(rankme(Tensor::eye(d), 0.0) - static_cast<double>(d)) <= 1e-12;
    std::vector<double> rows(d * 3, 0.0);
    for (std::size_t i = 0; i < d; ++i) rows[i * 3] = static_cast<double>(i + 1);
    closed = closed && rankme(Tensor({d, 3}, rows), 0.0) == 1.0;
    std::vector<double> spectrum(d, 0.0);
    spectrum[0] = 3.5;
    closed = closed && rankme_from_singular_values(spectrum, 0.0) == 1.0;
  }
  return {worst_scale <= 1e-9 && worst_rot <= 1e-9 && closed,
          fmt::format("100 batches at eps=0: scale {:.3g}, rotation {:.3g}; identity and rank-1 "
                      "closed forms {}",
                      worst_scale, worst_rot, closed ? "exact" : "off")};
}

}  // namespace sslforge::acceptance
