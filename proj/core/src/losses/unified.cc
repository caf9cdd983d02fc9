#include "sslforge/losses/unified.h"

#include <cmath>
#include <cstdint>

#include <fmt/format.h>

#include "sslforge/common/error.h"
#include "sslforge/tensor/ops.h"

namespace sslforge {
namespace {

void check_partner(std::span<const std::size_t> partner, std::size_t n) {
  if (partner.size() != n) {
    throw DimensionError(fmt::format("partner map of size {} for {} rows", partner.size(), n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (partner[i] >= n || partner[i] == i) {
      throw ContractError(fmt::format("row {} has invalid partner {}", i, partner[i]));
    }
  }
}

std::vector<std::uint8_t> off_diagonal(std::size_t n) {
  std::vector<std::uint8_t> mask(n * n, 1);
  for (std::size_t i = 0; i < n; ++i) mask[i * n + i] = 0;
  return mask;
}

// (i, j) = ||z_i - z_i'||^2 - ||z_i - z_j||^2 from squared distances d.
Tensor distance_gaps(const Tensor& d, std::span<const std::size_t> partner) {
  const std::size_t n = d.rows();
  std::vector<IndexPair> own(n);
  for (std::size_t i = 0; i < n; ++i) own[i] = {i, partner[i]};
  return sub(expand_cols(pick(d, own), n), d);
}

void check_monotone(const std::vector<double>& grid, const std::vector<double>& values,
                    const std::string& what, const PhiPsiSpec& spec) {
  bool varies = false;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) {
      throw SpecError(fmt::format("{} of '{}' is not finite at {}", what, spec.name, grid[k]));
    }
    if (k > 0) {
      if (values[k] < values[k - 1]) {
        throw SpecError(fmt::format("{} of '{}' decreases between {} and {}", what, spec.name,
                                    grid[k - 1], grid[k]));
      }
      if (values[k] > values[k - 1]) varies = true;
    }
  }
  if (!varies) throw SpecError(fmt::format("{} of '{}' is constant", what, spec.name));
}

}  // namespace

const std::vector<std::string>& phi_psi_names() {
  static const std::vector<std::string> names{"infonce",         "mine",
                                              "triplet",         "soft_triplet",
                                              "n_plus_1_tuplet", "lifted_structured",
                                              "modified_triplet"};
  return names;
}

PhiPsiSpec phi_psi_preset(std::string_view name, double tau, double epsilon, double c) {
  PhiPsiSpec s{std::string(name), PhiKind::kTauLogEps, PsiKind::kExpTau, tau, epsilon, c};
  if (name == "infonce") {
    s.phi = PhiKind::kTauLogEps;
    s.psi = PsiKind::kExpTau;
  } else if (name == "mine") {
    s.phi = PhiKind::kLog;
    s.psi = PsiKind::kExp;
  } else if (name == "triplet") {
    s.phi = PhiKind::kIdentity;
    s.psi = PsiKind::kReluShift;
  } else if (name == "soft_triplet") {
    s.phi = PhiKind::kTauLog1p;
    s.psi = PsiKind::kExpTauShift;
  } else if (name == "n_plus_1_tuplet") {
    s.phi = PhiKind::kLog1p;
    s.psi = PsiKind::kExp;
  } else if (name == "lifted_structured") {
    s.phi = PhiKind::kLogSquaredPlus;
    s.psi = PsiKind::kExpShift;
  } else if (name == "modified_triplet") {
    s.phi = PhiKind::kIdentity;
    s.psi = PsiKind::kSigmoid;
  } else {
    throw SpecError(fmt::format("unknown phi/psi family '{}'", name));
  }
  return s;
}

Tensor apply_phi(const PhiPsiSpec& spec, const Tensor& x) {
  switch (spec.phi) {
    case PhiKind::kIdentity:
      return x;
    case PhiKind::kTauLogEps:
      return scale(log(add_scalar(x, spec.epsilon)), spec.tau);
    case PhiKind::kLog:
      return log(x);
    case PhiKind::kTauLog1p:
      return scale(log(add_scalar(x, 1.0)), spec.tau);
    case PhiKind::kLog1p:
      return log(add_scalar(x, 1.0));
    case PhiKind::kLogSquaredPlus:
      return square(relu(log(x)));
  }
  return x;
}

Tensor apply_psi(const PhiPsiSpec& spec, const Tensor& x) {
  switch (spec.psi) {
    case PsiKind::kExpTau:
      return exp(scale(x, 1.0 / spec.tau));
    case PsiKind::kExp:
      return exp(x);
    case PsiKind::kReluShift:
      return relu(add_scalar(x, spec.epsilon));
    case PsiKind::kExpTauShift:
      return exp(add_scalar(scale(x, 1.0 / spec.tau), spec.epsilon));
    case PsiKind::kExpShift:
      return exp(add_scalar(x, spec.epsilon));
    case PsiKind::kSigmoid:
      return sigmoid(scale(x, spec.c));
  }
  return x;
}

void validate_phi_psi(const PhiPsiSpec& spec) {
  constexpr std::size_t kGrid = 201;
  std::vector<double> psi_grid(kGrid), phi_grid(kGrid);
  for (std::size_t k = 0; k < kGrid; ++k) {
    psi_grid[k] = -10.0 + 20.0 * static_cast<double>(k) / (kGrid - 1);
    phi_grid[k] = 100.0 * static_cast<double>(k + 1) / kGrid;
  }
  const Tensor psi = apply_psi(spec, Tensor({1, kGrid}, psi_grid));
  const Tensor phi = apply_phi(spec, Tensor({1, kGrid}, phi_grid));
  check_monotone(psi_grid, psi.vec(), "psi", spec);
  check_monotone(phi_grid, phi.vec(), "phi", spec);
}

Tensor generalized_loss(const Tensor& z, std::span<const std::size_t> partner,
                        const PhiPsiSpec& spec) {
  validate_phi_psi(spec);
  const std::size_t n = z.rows();
  check_partner(partner, n);
  const Tensor gaps = distance_gaps(pairwise_sq_dist(z, z), partner);
  const auto mask = off_diagonal(n);
  const Tensor weights(Shape{n, n}, std::vector<double>(mask.begin(), mask.end()));
  const Tensor inner = row_sum(mul(apply_psi(spec, gaps), weights));
  return sum(apply_phi(spec, inner));
}

Tensor generalized_nce_loss(const Tensor& z, std::span<const std::size_t> partner, double tau,
                            double epsilon) {
  if (!(tau > 0.0)) throw ParameterError("generalized_nce_loss: tau must be positive");
  if (!(epsilon >= 0.0)) throw ParameterError("generalized_nce_loss: epsilon must be >= 0");
  const std::size_t n = z.rows();
  check_partner(partner, n);
  const Tensor logits = scale(pairwise_sq_dist(z, z), -1.0 / tau);  // -d_ij^2 / tau
  std::vector<IndexPair> own(n);
  for (std::size_t i = 0; i < n; ++i) own[i] = {i, partner[i]};
  const Tensor pos = pick(logits, own);
  const Tensor others = masked_logsumexp_rows(logits, off_diagonal(n));
  Tensor denom_log = others;
  if (epsilon > 0.0) {
    // log(eps e^{pos} + e^{others}) as a two-term log-sum-exp per row.
    const Tensor both = concat_rows(std::vector<Tensor>{
        transpose(add_scalar(pos, std::log(epsilon))), transpose(others)});
    denom_log = masked_logsumexp_rows(transpose(both), std::vector<std::uint8_t>(2 * n, 1));
  }
  return scale(sum(sub(denom_log, pos)), tau);
}

}  // namespace sslforge
