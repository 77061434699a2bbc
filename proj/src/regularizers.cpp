#include "gsr/regularizers.hpp"

#include <cmath>
#include <stdexcept>

#include "gsr/ops.hpp"

namespace gsr {

ClassWeights effective_number_weights(std::span<const std::size_t> counts, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("effective_number_weights: alpha must lie in (0, 1)");
  }
  ClassWeights w;
  w.alpha = alpha;
  w.lambda.reserve(counts.size());
  for (std::size_t n : counts) {
    if (n == 0) throw std::invalid_argument("effective_number_weights: class with zero samples");
    w.lambda.push_back(effective_number_weight(n, alpha));
  }
  return w;
}

std::string to_string(RegVariant v) {
  switch (v) {
    case RegVariant::none: return "none";
    case RegVariant::gsr: return "gsr";
    case RegVariant::gsn: return "gsn";
    case RegVariant::gsrip: return "gsrip";
  }
  return "unknown";
}

RegVariant parse_reg_variant(const std::string& s) {
  if (s == "none") return RegVariant::none;
  if (s == "gsr") return RegVariant::gsr;
  if (s == "gsn") return RegVariant::gsn;
  if (s == "gsrip") return RegVariant::gsrip;
  throw std::invalid_argument("unknown regularizer variant '" + s + "'");
}

void RegConfig::validate() const {
  if (!(lambda_gsr >= 0.0)) throw std::invalid_argument("lambda_gsr must be >= 0");
  if (power_iters < 1) throw std::invalid_argument("power_iters must be >= 1");
  if (groups < 1) throw std::invalid_argument("groups must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
}

GsrLossResult gsr_loss(Tape& tape, std::span<CbnLayer> layers, const ClassWeights& weights,
                       const RegConfig& cfg, PowerIterTable& states) {
  cfg.validate();
  GsrLossResult out;
  const bool isometry = cfg.variant == RegVariant::gsrip;
  Var total = tape.constant(Tensor::scalar(0.0));
  for (CbnLayer& layer : layers) {
    const std::size_t classes = layer.classes();
    if (weights.lambda.size() != classes) {
      throw std::invalid_argument("gsr_loss: class weights do not match the cBN class count");
    }
    if (layer.features() % cfg.groups != 0) {
      throw std::invalid_argument("gsr_loss: " + std::to_string(cfg.groups) +
                                  " groups do not divide layer width " +
                                  std::to_string(layer.features()));
    }
    Var gamma = tape.parameter(layer.gamma);
    Var beta = tape.parameter(layer.beta);
    for (std::size_t y = 0; y < classes; ++y) {
      PowerIterState& sg = states.at(layer.layer_index, y, ParamKind::gamma);
      PowerIterState& sb = states.at(layer.layer_index, y, ParamKind::beta);
      Var g_row = select_row(gamma, y);
      Var b_row = select_row(beta, y);
      Var term;
      if (isometry) {
        IsometryEstimate eg, eb;
        term = add(gsrip_penalty(g_row, cfg.groups, cfg.power_iters, sg, &eg),
                   gsrip_penalty(b_row, cfg.groups, cfg.power_iters, sb, &eb));
        out.sigma_gamma.push_back(eg.inner.sigma);
        out.sigma_beta.push_back(eb.inner.sigma);
      } else {
        SpectralEstimate eg, eb;
        term = add(sigma_max_squared(g_row, cfg.groups, cfg.power_iters, sg, &eg),
                   sigma_max_squared(b_row, cfg.groups, cfg.power_iters, sb, &eb));
        out.sigma_gamma.push_back(eg.sigma);
        out.sigma_beta.push_back(eb.sigma);
      }
      total = add(total, scale(term, weights.lambda[y]));
    }
  }
  out.loss = total;
  return out;
}

Var lecam_loss(const Var& d_real, const Var& d_fake, const LeCamState& state) {
  Tape& tape = d_real.tape();
  Var anchor_fake = tape.constant(Tensor::scalar(state.anchor_fake));
  Var anchor_real = tape.constant(Tensor::scalar(state.anchor_real));
  return add(mean(square(sub(d_real, anchor_fake))), mean(square(sub(d_fake, anchor_real))));
}

LeCamState lecam_update(LeCamState state, double mean_d_real, double mean_d_fake) {
  state.anchor_real = state.decay * state.anchor_real + (1.0 - state.decay) * mean_d_real;
  state.anchor_fake = state.decay * state.anchor_fake + (1.0 - state.decay) * mean_d_fake;
  return state;
}

Var hinge_d_loss(const Var& d_real, const Var& d_fake) {
  Var real_term = mean(relu(add_scalar(scale(d_real, -1.0), 1.0)));
  Var fake_term = mean(relu(add_scalar(d_fake, 1.0)));
  return add(real_term, fake_term);
}

Var hinge_g_loss(const Var& d_fake) { return scale(mean(d_fake), -1.0); }

}  // namespace gsr
