#include "gsr/condgen.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "gsr/ops.hpp"
#include "gsr/seeding.hpp"

namespace gsr {
namespace {

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

void check_label(std::size_t y, std::size_t classes, const char* who) {
  if (y >= classes) {
    throw std::out_of_range(std::string(who) + ": label " + std::to_string(y) + " outside [0, " +
                            std::to_string(classes) + ")");
  }
}

}  // namespace

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  weight = Parameter(name + ".weight", uniform_tensor(Shape{in, out}, bound, rng));
  bias = Parameter(name + ".bias", uniform_tensor(Shape{out}, bound, rng));
}

Var Linear::forward(Tape& tape, const Var& x, bool trainable) {
  Var w = trainable ? tape.parameter(weight) : tape.constant(weight.value);
  Var b = trainable ? tape.parameter(bias) : tape.constant(bias.value);
  return add_rows(matmul(x, w), b);
}

CbnLayer::CbnLayer(std::size_t index, std::size_t classes, std::size_t features, double eps)
    : layer_index(index), epsilon(eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("CbnLayer: epsilon must be positive");
  const std::string prefix = "gen.layer" + std::to_string(index + 1) + ".cbn.";
  gamma = Parameter(prefix + "gamma", Tensor(Shape{classes, features}, 1.0));
  beta = Parameter(prefix + "beta", Tensor(Shape{classes, features}));
  running_mean = Tensor(Shape{classes, features});
  running_var = Tensor(Shape{classes, features}, 1.0);
}

Var cbn_forward(Tape& tape, const Var& x, std::size_t y, CbnLayer& layer, ForwardMode mode,
                const GainNormalization* gain_norm) {
  check_label(y, layer.classes(), "cbn_forward");
  const std::size_t d = layer.features();
  if (x.value().rank() != 2 || x.value().cols() != d) {
    throw ShapeError("cbn_forward: input " + shape_string(x.shape()) + " for " +
                     std::to_string(d) + " features");
  }

  Var xhat;
  if (mode == ForwardMode::train) {
    if (x.value().rows() < 2) throw ShapeError("cbn_forward: batch statistics need at least 2 rows");
    const BatchStats stats = batch_stats(x);
    xhat = normalize(x, stats.mean, stats.var, layer.epsilon);
    const double keep = layer.running_decay;
    double* rm = layer.running_mean.data() + y * d;
    double* rv = layer.running_var.data() + y * d;
    for (std::size_t j = 0; j < d; ++j) {
      rm[j] = keep * rm[j] + (1.0 - keep) * stats.mean.value()[j];
      rv[j] = keep * rv[j] + (1.0 - keep) * stats.var.value()[j];
    }
  } else {
    Tensor mu(Shape{d});
    Tensor var(Shape{d});
    std::copy_n(layer.running_mean.data() + y * d, d, mu.data());
    std::copy_n(layer.running_var.data() + y * d, d, var.data());
    xhat = normalize(x, tape.constant(std::move(mu)), tape.constant(std::move(var)),
                     layer.epsilon);
  }

  Var gain = select_row(tape.parameter(layer.gamma), y);
  if (gain_norm) {
    if (!gain_norm->states) throw std::invalid_argument("cbn_forward: gain normalization without states");
    gain = spectral_normalize(gain, gain_norm->groups, gain_norm->power_iters,
                              gain_norm->states->at(layer.layer_index, y, ParamKind::gamma),
                              mode == ForwardMode::train);
  }
  Var bias = select_row(tape.parameter(layer.beta), y);
  return add_rows(mul_rows(xhat, gain), bias);
}

GeneratorNet::GeneratorNet(const GeneratorShape& shape, std::uint64_t seed) : shape_(shape) {
  if (shape.classes == 0) throw std::invalid_argument("GeneratorNet: no classes");
  std::mt19937_64 rng(derive_seed({seed, 0x6e6e}));
  affine_.emplace_back("gen.affine1", shape.latent_dim, shape.hidden, rng);
  affine_.emplace_back("gen.affine2", shape.hidden, shape.hidden, rng);
  affine_.emplace_back("gen.affine3", shape.hidden, shape.output_dim, rng);
  if (shape.zero_output_head) {
    affine_.back().weight.value.fill(0.0);
    affine_.back().bias.value.fill(0.0);
  }
  cbn_.emplace_back(0, shape.classes, shape.hidden, shape.epsilon);
  cbn_.emplace_back(1, shape.classes, shape.hidden, shape.epsilon);
}

Var GeneratorNet::forward(Tape& tape, const Tensor& z, std::size_t y, ForwardMode mode,
                          const GainNormalization* gain_norm) {
  check_label(y, shape_.classes, "generator_forward");
  if (z.rank() != 2 || z.cols() != shape_.latent_dim) {
    throw ShapeError("generator_forward: latent batch " + shape_string(z.shape()) +
                     " for latent_dim " + std::to_string(shape_.latent_dim));
  }
  Var h = tape.constant(z);
  for (std::size_t l = 0; l < cbn_.size(); ++l) {
    h = affine_[l].forward(tape, h);
    h = cbn_forward(tape, h, y, cbn_[l], mode, gain_norm);
    h = leaky_relu(h, 0.2);
  }
  return affine_.back().forward(tape, h);
}

std::vector<Parameter*> GeneratorNet::parameters() {
  std::vector<Parameter*> out;
  for (std::size_t l = 0; l < affine_.size(); ++l) {
    out.push_back(&affine_[l].weight);
    out.push_back(&affine_[l].bias);
    if (l < cbn_.size()) {
      out.push_back(&cbn_[l].gamma);
      out.push_back(&cbn_[l].beta);
    }
  }
  return out;
}

std::vector<const Parameter*> GeneratorNet::parameters() const {
  auto params = const_cast<GeneratorNet*>(this)->parameters();
  return {params.begin(), params.end()};
}

DiscriminatorNet::DiscriminatorNet(const DiscriminatorShape& shape, std::uint64_t seed)
    : shape_(shape) {
  if (shape.classes == 0) throw std::invalid_argument("DiscriminatorNet: no classes");
  std::mt19937_64 rng(derive_seed({seed, 0xd15c}));
  trunk_.emplace_back("dis.trunk1", shape.input_dim, shape.hidden, rng);
  trunk_.emplace_back("dis.trunk2", shape.hidden, shape.hidden, rng);
  head_ = Linear("dis.head", shape.hidden, 1, rng);
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.hidden));
  embed_ = Parameter("dis.embed", uniform_tensor(Shape{shape.classes, shape.hidden}, bound, rng));
  if (shape.spectral_norm) {
    for (std::uint64_t i = 0; i < 3; ++i) {
      const std::size_t cols = i < 2 ? shape.hidden : 1;
      sn_states_.push_back(PowerIterState::seeded(cols, derive_seed({seed, 0x5a, i})));
    }
  }
}

Var DiscriminatorNet::weight(Tape& tape, Linear& layer, std::size_t index, bool trainable) {
  Var w = trainable ? tape.parameter(layer.weight) : tape.constant(layer.weight.value);
  if (!shape_.spectral_norm) return w;
  return spectral_normalize(w, layer.in_features(), shape_.sn_power_iters, sn_states_[index],
                            trainable);
}

Var DiscriminatorNet::forward(Tape& tape, const Var& x, std::size_t y, bool trainable) {
  check_label(y, shape_.classes, "discriminator_forward");
  if (x.value().rank() != 2 || x.value().cols() != shape_.input_dim) {
    throw ShapeError("discriminator_forward: input " + shape_string(x.shape()));
  }
  auto param = [&](Parameter& p) { return trainable ? tape.parameter(p) : tape.constant(p.value); };

  Var h = x;
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    h = add_rows(matmul(h, weight(tape, trunk_[i], i, trainable)), param(trunk_[i].bias));
    h = leaky_relu(h, 0.2);
  }
  const std::size_t batch = x.value().rows();
  Var psi = add_rows(matmul(h, weight(tape, head_, 2, trainable)), param(head_.bias));
  Var e_y = reshape(select_row(param(embed_), y), Shape{shape_.hidden, 1});
  Var proj = matmul(h, e_y);
  return reshape(add(psi, proj), Shape{batch});
}

std::vector<Parameter*> DiscriminatorNet::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : trunk_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  out.push_back(&head_.weight);
  out.push_back(&head_.bias);
  out.push_back(&embed_);
  return out;
}

std::vector<const Parameter*> DiscriminatorNet::parameters() const {
  auto params = const_cast<DiscriminatorNet*>(this)->parameters();
  return {params.begin(), params.end()};
}

}  // namespace gsr
