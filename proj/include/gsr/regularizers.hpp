#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "gsr/autodiff.hpp"
#include "gsr/condgen.hpp"
#include "gsr/spectral.hpp"

namespace gsr {

/// Per-class regularizer weights lambda_y = (1 - alpha) / (1 - alpha^{n_y}).
struct ClassWeights {
  std::vector<double> lambda;
  double alpha = 0.99;
};

/// (1 - alpha) / (1 - alpha^n) for n >= 1, in any floating type. In binary64
/// the value stops changing once alpha^n drops below machine resolution.
template <typename Real>
Real effective_number_weight(std::size_t n, const Real& alpha) {
  using std::pow;
  const Real one(1);
  return (one - alpha) / (one - pow(alpha, Real(n)));
}

ClassWeights effective_number_weights(std::span<const std::size_t> counts, double alpha);

enum class RegVariant { none, gsr, gsn, gsrip };

std::string to_string(RegVariant v);
RegVariant parse_reg_variant(const std::string& s);

struct RegConfig {
  double lambda_gsr = 0.5;
  double alpha = 0.99;
  std::size_t groups = 8;
  std::size_t power_iters = 4;
  RegVariant variant = RegVariant::gsr;

  void validate() const;
};

struct GsrLossResult {
  Var loss;
  /// sigma_max of the grouped gamma / beta rows, indexed [layer * K + class].
  /// For the isometry variant these are the residual norms.
  std::vector<double> sigma_gamma;
  std::vector<double> sigma_beta;
};

/// sum_l sum_y lambda_y (sigma_max^2(Gamma^l_y) + sigma_max^2(B^l_y)), or the
/// isometry form sigma_max^2(M^T M - I) for RegVariant::gsrip. Advances the
/// warm-start vectors in `states`.
GsrLossResult gsr_loss(Tape& tape, std::span<CbnLayer> layers, const ClassWeights& weights,
                       const RegConfig& cfg, PowerIterTable& states);

struct LeCamState {
  double anchor_real = 0.0;  // EMA of D on real samples
  double anchor_fake = 0.0;  // EMA of D on generated samples
  double decay = 0.99;
  double lambda_lc = 0.1;
};

/// mean (d_real - anchor_fake)^2 + mean (d_fake - anchor_real)^2 (unweighted).
Var lecam_loss(const Var& d_real, const Var& d_fake, const LeCamState& state);

LeCamState lecam_update(LeCamState state, double mean_d_real, double mean_d_fake);

/// mean max(0, 1 - d_real) + mean max(0, 1 + d_fake).
Var hinge_d_loss(const Var& d_real, const Var& d_fake);
/// -mean d_fake.
Var hinge_g_loss(const Var& d_fake);

}  // namespace gsr
