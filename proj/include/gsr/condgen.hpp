#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "gsr/autodiff.hpp"
#include "gsr/spectral.hpp"

namespace gsr {

enum class ForwardMode { train, eval };

/// Fully connected layer y = x W + b with W stored [in x out].
struct Linear {
  Parameter weight;
  Parameter bias;

  Linear() = default;
  Linear(const std::string& name, std::size_t in, std::size_t out, std::mt19937_64& rng);

  std::size_t in_features() const { return weight.value.rows(); }
  std::size_t out_features() const { return weight.value.cols(); }

  Var forward(Tape& tape, const Var& x, bool trainable = true);
};

/// Conditional BatchNorm: per-class gain and bias tables applied after batch
/// normalization. Running statistics are tracked per class because every
/// training batch carries a single label.
struct CbnLayer {
  std::size_t layer_index = 0;
  double epsilon = 1e-5;
  double running_decay = 0.9;
  Parameter gamma;  // [K x d]
  Parameter beta;   // [K x d]
  Tensor running_mean;
  Tensor running_var;

  CbnLayer() = default;
  CbnLayer(std::size_t layer_index, std::size_t classes, std::size_t features,
           double epsilon = 1e-5);

  std::size_t classes() const { return gamma.value.rows(); }
  std::size_t features() const { return gamma.value.cols(); }
};

/// Group spectral normalization of the gain rows applied during forward.
struct GainNormalization {
  std::size_t groups = 8;
  std::size_t power_iters = 4;
  PowerIterTable* states = nullptr;
};

/// Normalizes the (single-label) batch `x` and applies gamma_y, beta_y.
/// `gain_norm` swaps gamma_y for gamma_y / sigma_max(group(gamma_y)).
Var cbn_forward(Tape& tape, const Var& x, std::size_t y, CbnLayer& layer,
                ForwardMode mode = ForwardMode::train, const GainNormalization* gain_norm = nullptr);

struct GeneratorShape {
  std::size_t classes = 8;
  std::size_t latent_dim = 16;
  std::size_t hidden = 64;
  std::size_t output_dim = 2;
  double epsilon = 1e-5;
  bool zero_output_head = false;
};

/// z -> affine -> cBN -> lrelu -> affine -> cBN -> lrelu -> affine(2).
class GeneratorNet {
 public:
  GeneratorNet() = default;
  GeneratorNet(const GeneratorShape& shape, std::uint64_t seed);

  Var forward(Tape& tape, const Tensor& z, std::size_t y, ForwardMode mode = ForwardMode::train,
              const GainNormalization* gain_norm = nullptr);

  const GeneratorShape& shape() const { return shape_; }
  std::size_t classes() const { return shape_.classes; }
  std::size_t latent_dim() const { return shape_.latent_dim; }

  std::vector<CbnLayer>& cbn_layers() { return cbn_; }
  const std::vector<CbnLayer>& cbn_layers() const { return cbn_; }
  std::vector<Linear>& affine_layers() { return affine_; }

  /// Every trainable parameter in a fixed order.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  GeneratorShape shape_;
  std::vector<Linear> affine_;
  std::vector<CbnLayer> cbn_;
};

struct DiscriminatorShape {
  std::size_t classes = 8;
  std::size_t input_dim = 2;
  std::size_t hidden = 64;
  bool spectral_norm = false;
  std::size_t sn_power_iters = 1;
};

/// Projection discriminator: score = psi(phi(x)) + e_y . phi(x).
class DiscriminatorNet {
 public:
  DiscriminatorNet() = default;
  DiscriminatorNet(const DiscriminatorShape& shape, std::uint64_t seed);

  /// Returns a length-B vector of logits. `trainable` false records the
  /// parameters as constants (no parameter gradients).
  Var forward(Tape& tape, const Var& x, std::size_t y, bool trainable = true);

  const DiscriminatorShape& shape() const { return shape_; }
  Parameter& embeddings() { return embed_; }
  std::vector<Linear>& trunk() { return trunk_; }
  Linear& head() { return head_; }

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

 private:
  Var weight(Tape& tape, Linear& layer, std::size_t index, bool trainable);

  DiscriminatorShape shape_;
  std::vector<Linear> trunk_;
  Linear head_;
  Parameter embed_;  // [K x hidden]
  std::vector<PowerIterState> sn_states_;
};

}  // namespace gsr
