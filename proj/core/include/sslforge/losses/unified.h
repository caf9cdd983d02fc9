#ifndef SSLFORGE_LOSSES_UNIFIED_H_
#define SSLFORGE_LOSSES_UNIFIED_H_

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sslforge/tensor/tensor.h"

namespace sslforge {

enum class PhiKind {
  kIdentity,        // x
  kTauLogEps,       // tau log(eps + x)
  kLog,             // log x
  kTauLog1p,        // tau log(1 + x)
  kLog1p,           // log(1 + x)
  kLogSquaredPlus,  // [log x]_+^2
};

enum class PsiKind {
  kExpTau,       // e^{x / tau}
  kExp,          // e^x
  kReluShift,    // [x + eps]_+
  kExpTauShift,  // e^{x / tau + eps}
  kExpShift,     // e^{x + eps}
  kSigmoid,      // sigmoid(c x)
};

struct PhiPsiSpec {
  std::string name;
  PhiKind phi = PhiKind::kTauLogEps;
  PsiKind psi = PsiKind::kExpTau;
  double tau = 1.0;
  double epsilon = 0.0;
  double c = 1.0;
};

// Registry rows: infonce, mine, triplet, soft_triplet, n_plus_1_tuplet,
// lifted_structured, modified_triplet. Throws SpecError for unknown names.
PhiPsiSpec phi_psi_preset(std::string_view name, double tau = 1.0, double epsilon = 0.0,
                          double c = 1.0);
const std::vector<std::string>& phi_psi_names();

// Elementwise phi / psi through differentiable ops.
Tensor apply_phi(const PhiPsiSpec& spec, const Tensor& x);
Tensor apply_psi(const PhiPsiSpec& spec, const Tensor& x);

// Evaluates psi on a grid over [-10, 10] and phi over (0, 100]; throws
// SpecError unless both are finite and non-decreasing there and not constant.
void validate_phi_psi(const PhiPsiSpec& spec);

// sum_i phi( sum_{j != i} psi(||z_i - z_i'||^2 - ||z_i - z_j||^2) ) with
// i' = partner[i]. Validates `spec` first.
Tensor generalized_loss(const Tensor& z, std::span<const std::size_t> partner,
                        const PhiPsiSpec& spec);

// -tau sum_i log( e^{-d_i^2/tau} / (eps e^{-d_i^2/tau} + sum_{j != i} e^{-d_ij^2/tau}) )
// with d_i = ||z_i - z_i'||, d_ij = ||z_i - z_j||.
Tensor generalized_nce_loss(const Tensor& z, std::span<const std::size_t> partner, double tau,
                            double epsilon);

}  // namespace sslforge

#endif  // SSLFORGE_LOSSES_UNIFIED_H_
