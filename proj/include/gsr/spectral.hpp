#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gsr/autodiff.hpp"

namespace gsr {

/// A length-d parameter vector viewed as an n_g x n_c matrix, row-major:
/// element i sits at (i / n_c, i % n_c).
class GroupedMatrix {
 public:
  GroupedMatrix(std::size_t groups, std::size_t columns);
  GroupedMatrix(std::size_t groups, std::size_t columns, std::vector<double> data);

  std::size_t groups() const { return groups_; }
  std::size_t columns() const { return columns_; }
  std::size_t size() const { return data_.size(); }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * columns_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * columns_ + c]; }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  bool is_zero() const;

  friend bool operator==(const GroupedMatrix&, const GroupedMatrix&) = default;

 private:
  std::size_t groups_;
  std::size_t columns_;
  std::vector<double> data_;
};

GroupedMatrix group(std::span<const double> v, std::size_t groups);
std::vector<double> ungroup(const GroupedMatrix& m);

/// Right singular vector estimate carried between calls (warm start).
struct PowerIterState {
  std::vector<double> v;
  std::size_t iterations_run = 0;

  /// Deterministic unit vector of length `n` derived from `seed`.
  static PowerIterState seeded(std::size_t n, std::uint64_t seed);
};

struct SpectralEstimate {
  double sigma = 0.0;
  std::vector<double> u;  // length n_g
  std::vector<double> v;  // length n_c
};

/// Alternating power iteration u <- Mv/|Mv|, v <- M^T u/|M^T u|, sigma = u^T M v.
/// A zero matrix returns sigma = 0 and leaves `state` untouched.
SpectralEstimate sigma_max_power(const GroupedMatrix& m, std::size_t iters, PowerIterState& state);

/// Runs power iteration until sigma stops changing (relative 1e-15) or
/// `max_iters` is reached, starting from a fixed seed.
SpectralEstimate sigma_max_converged(const GroupedMatrix& m, std::size_t max_iters = 10000);

/// d sigma_max / dM = u v^T for a simple leading singular value.
GroupedMatrix sigma_max_gradient(const GroupedMatrix& m, std::span<const double> u,
                                 std::span<const double> v);

/// Gamma / sigma_max(Gamma), flattened back to a vector. Uses a converged estimate.
std::vector<double> gsn_normalize(std::span<const double> gamma, std::size_t groups);

/// M^T M - I, the matrix whose spectral norm the isometry penalty measures.
GroupedMatrix gram_minus_identity(const GroupedMatrix& m);

struct IsometryEstimate {
  double penalty = 0.0;  // sigma_max^2(M^T M - I)
  SpectralEstimate inner;
};

/// sigma_max^2(M^T M - I) by power iteration on the n_c x n_c residual.
IsometryEstimate gsrip_penalty(const GroupedMatrix& m, std::size_t iters, PowerIterState& state);
/// Converged variant with a fixed start vector.
double gsrip_penalty(const GroupedMatrix& m);

enum class ParamKind { gamma = 0, beta = 1 };

/// Warm-start vectors for every (layer, class, parameter kind), each seeded
/// deterministically from the triple.
class PowerIterTable {
 public:
  PowerIterTable() = default;
  PowerIterTable(std::size_t layers, std::size_t classes, std::size_t length, std::uint64_t seed);

  PowerIterState& at(std::size_t layer, std::size_t cls, ParamKind kind);
  const PowerIterState& at(std::size_t layer, std::size_t cls, ParamKind kind) const;

  std::size_t layers() const { return layers_; }
  std::size_t classes() const { return classes_; }
  bool empty() const { return states_.empty(); }

 private:
  std::size_t index(std::size_t layer, std::size_t cls, ParamKind kind) const;

  std::size_t layers_ = 0;
  std::size_t classes_ = 0;
  std::vector<PowerIterState> states_;
};

/// Multiplications per power-iteration solve: (n_g^2 + n_c^2) * iters.
std::uint64_t iteration_complexity(std::uint64_t groups, std::uint64_t columns,
                                   std::uint64_t power_iters);

// Differentiable forms. Power-iteration vectors are treated as constants.

/// sigma_max^2 of the grouped vector; gradient 2 sigma ungroup(u v^T).
/// `estimate` (optional) receives the sigma, u, v used.
Var sigma_max_squared(const Var& vec, std::size_t groups, std::size_t iters, PowerIterState& state,
                      SpectralEstimate* estimate = nullptr);

/// sigma_max^2(M^T M - I) of the grouped vector.
Var gsrip_penalty(const Var& vec, std::size_t groups, std::size_t iters, PowerIterState& state,
                  IsometryEstimate* estimate = nullptr);

/// x / sigma_max(group(x)). Works on vectors and on weight matrices (use
/// groups = rows for the matrix's own spectral norm). `update_state`
/// false runs the iterations on a copy.
Var spectral_normalize(const Var& x, std::size_t groups, std::size_t iters, PowerIterState& state,
                       bool update_state = true);

}  // namespace gsr
