#include "gsr/spectral.hpp"

#include "gsr/seeding.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace gsr {
namespace {

double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

void scale_in_place(std::span<double> x, double k) {
  for (double& v : x) v *= k;
}

// out = M x
void apply(const GroupedMatrix& m, std::span<const double> x, std::span<double> out) {
  for (std::size_t r = 0; r < m.groups(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m.columns(); ++c) s += m(r, c) * x[c];
    out[r] = s;
  }
}

// out = M^T x
void apply_transpose(const GroupedMatrix& m, std::span<const double> x, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t r = 0; r < m.groups(); ++r) {
    const double xr = x[r];
    for (std::size_t c = 0; c < m.columns(); ++c) out[c] += m(r, c) * xr;
  }
}

double bilinear(const GroupedMatrix& m, std::span<const double> u, std::span<const double> v) {
  double s = 0.0;
  for (std::size_t r = 0; r < m.groups(); ++r) {
    double row = 0.0;
    for (std::size_t c = 0; c < m.columns(); ++c) row += m(r, c) * v[c];
    s += u[r] * row;
  }
  return s;
}

// Largest-norm row of M as a unit vector; M v != 0 for this v whenever M != 0.
std::vector<double> fallback_direction(const GroupedMatrix& m) {
  std::size_t best = 0;
  double best_norm = -1.0;
  for (std::size_t r = 0; r < m.groups(); ++r) {
    const double n = norm2(m.data().subspan(r * m.columns(), m.columns()));
    if (n > best_norm) {
      best_norm = n;
      best = r;
    }
  }
  std::vector<double> v(m.data().begin() + static_cast<std::ptrdiff_t>(best * m.columns()),
                        m.data().begin() + static_cast<std::ptrdiff_t>((best + 1) * m.columns()));
  scale_in_place(v, 1.0 / best_norm);
  return v;
}

Tensor flat_like(const Tensor& like, const std::vector<double>& values) {
  return Tensor(like.shape(), values);
}

std::vector<double> outer_flat(std::span<const double> u, std::span<const double> v, double k) {
  std::vector<double> out(u.size() * v.size());
  for (std::size_t r = 0; r < u.size(); ++r)
    for (std::size_t c = 0; c < v.size(); ++c) out[r * v.size() + c] = k * u[r] * v[c];
  return out;
}

}  // namespace

GroupedMatrix::GroupedMatrix(std::size_t groups, std::size_t columns)
    : groups_(groups), columns_(columns), data_(groups * columns, 0.0) {}

GroupedMatrix::GroupedMatrix(std::size_t groups, std::size_t columns, std::vector<double> data)
    : groups_(groups), columns_(columns), data_(std::move(data)) {
  if (data_.size() != groups_ * columns_) {
    throw std::invalid_argument("GroupedMatrix: " + std::to_string(data_.size()) +
                                " values for a " + std::to_string(groups_) + "x" +
                                std::to_string(columns_) + " matrix");
  }
}

bool GroupedMatrix::is_zero() const {
  for (double v : data_)
    if (v != 0.0) return false;
  return true;
}

GroupedMatrix group(std::span<const double> v, std::size_t groups) {
  if (groups == 0 || v.empty() || v.size() % groups != 0) {
    throw std::invalid_argument("group: " + std::to_string(groups) +
                                " groups do not divide a vector of length " +
                                std::to_string(v.size()));
  }
  return GroupedMatrix(groups, v.size() / groups, std::vector<double>(v.begin(), v.end()));
}

std::vector<double> ungroup(const GroupedMatrix& m) {
  return std::vector<double>(m.data().begin(), m.data().end());
}

PowerIterState PowerIterState::seeded(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("PowerIterState: empty vector");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  PowerIterState s;
  s.v.resize(n);
  double nrm = 0.0;
  while (nrm == 0.0) {
    for (double& x : s.v) x = normal(rng);
    nrm = norm2(s.v);
  }
  scale_in_place(s.v, 1.0 / nrm);
  return s;
}

SpectralEstimate sigma_max_power(const GroupedMatrix& m, std::size_t iters, PowerIterState& state) {
  if (iters == 0) throw std::invalid_argument("sigma_max_power: iters must be >= 1");
  if (state.v.size() != m.columns()) {
    throw std::invalid_argument("sigma_max_power: state length " + std::to_string(state.v.size()) +
                                " for " + std::to_string(m.columns()) + " columns");
  }
  SpectralEstimate est;
  est.u.assign(m.groups(), 0.0);
  if (m.is_zero()) {
    est.v = state.v;
    return est;
  }
  std::vector<double> v = state.v;
  std::vector<double>& u = est.u;
  for (std::size_t it = 0; it < iters; ++it) {
    apply(m, v, u);
    double nu = norm2(u);
    if (nu == 0.0) {
      v = fallback_direction(m);
      apply(m, v, u);
      nu = norm2(u);
    }
    scale_in_place(u, 1.0 / nu);
    apply_transpose(m, u, v);
    scale_in_place(v, 1.0 / norm2(v));
  }
  est.sigma = bilinear(m, u, v);
  est.v = v;
  state.v = std::move(v);
  state.iterations_run += iters;
  return est;
}

SpectralEstimate sigma_max_converged(const GroupedMatrix& m, std::size_t max_iters) {
  PowerIterState state = PowerIterState::seeded(m.columns(), 0x5eed5eedULL);
  SpectralEstimate est = sigma_max_power(m, 1, state);
  if (est.sigma == 0.0) return est;
  int stalls = 0;
  for (std::size_t it = 1; it < max_iters && stalls < 3; ++it) {
    const double prev = est.sigma;
    est = sigma_max_power(m, 1, state);
    const double change = std::abs(est.sigma - prev);
    stalls = change <= 4.0 * std::numeric_limits<double>::epsilon() * est.sigma ? stalls + 1 : 0;
  }
  return est;
}

GroupedMatrix sigma_max_gradient(const GroupedMatrix& m, std::span<const double> u,
                                 std::span<const double> v) {
  if (u.size() != m.groups() || v.size() != m.columns()) {
    throw std::invalid_argument("sigma_max_gradient: singular vector lengths do not match");
  }
  return GroupedMatrix(m.groups(), m.columns(), outer_flat(u, v, 1.0));
}

std::vector<double> gsn_normalize(std::span<const double> gamma, std::size_t groups) {
  const GroupedMatrix m = group(gamma, groups);
  const double sigma = sigma_max_converged(m).sigma;
  if (sigma <= 0.0) throw std::invalid_argument("gsn_normalize: zero matrix");
  std::vector<double> out(gamma.begin(), gamma.end());
  scale_in_place(out, 1.0 / sigma);
  return out;
}

GroupedMatrix gram_minus_identity(const GroupedMatrix& m) {
  const std::size_t n = m.columns();
  GroupedMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < m.groups(); ++r) s += m(r, i) * m(r, j);
      if (i == j) s -= 1.0;
      a(i, j) = s;
      a(j, i) = s;
    }
  }
  return a;
}

IsometryEstimate gsrip_penalty(const GroupedMatrix& m, std::size_t iters, PowerIterState& state) {
  IsometryEstimate out;
  out.inner = sigma_max_power(gram_minus_identity(m), iters, state);
  out.penalty = out.inner.sigma * out.inner.sigma;
  return out;
}

double gsrip_penalty(const GroupedMatrix& m) {
  const double s = sigma_max_converged(gram_minus_identity(m)).sigma;
  return s * s;
}

std::uint64_t iteration_complexity(std::uint64_t groups, std::uint64_t columns,
                                   std::uint64_t power_iters) {
  if (groups == 0 || columns == 0 || power_iters == 0) {
    throw std::invalid_argument("iteration_complexity: arguments must be positive");
  }
  return (groups * groups + columns * columns) * power_iters;
}

PowerIterTable::PowerIterTable(std::size_t layers, std::size_t classes, std::size_t length,
                               std::uint64_t seed)
    : layers_(layers), classes_(classes) {
  states_.reserve(layers * classes * 2);
  for (std::size_t l = 0; l < layers; ++l)
    for (std::size_t y = 0; y < classes; ++y)
      for (std::uint64_t kind = 0; kind < 2; ++kind) {
        states_.push_back(PowerIterState::seeded(length, derive_seed({seed, l, y, kind})));
      }
}

std::size_t PowerIterTable::index(std::size_t layer, std::size_t cls, ParamKind kind) const {
  if (layer >= layers_ || cls >= classes_) {
    throw std::out_of_range("PowerIterTable: (" + std::to_string(layer) + ", " +
                            std::to_string(cls) + ") out of range");
  }
  return (layer * classes_ + cls) * 2 + static_cast<std::size_t>(kind);
}

PowerIterState& PowerIterTable::at(std::size_t layer, std::size_t cls, ParamKind kind) {
  return states_[index(layer, cls, kind)];
}

const PowerIterState& PowerIterTable::at(std::size_t layer, std::size_t cls, ParamKind kind) const {
  return states_[index(layer, cls, kind)];
}

Var sigma_max_squared(const Var& vec, std::size_t groups, std::size_t iters, PowerIterState& state,
                      SpectralEstimate* estimate) {
  const Tensor& x = vec.value();
  const GroupedMatrix m = group(x.values(), groups);
  SpectralEstimate est = sigma_max_power(m, iters, state);
  const double sigma = est.sigma;
  Tensor local = flat_like(x, outer_flat(est.u, est.v, 2.0 * sigma));
  if (estimate) *estimate = std::move(est);
  return vec.tape().record("sigma_max_squared", Tensor::scalar(sigma * sigma), {vec},
                           [local = std::move(local)](const BackwardContext& c) {
                             if (c.input_grads[0]) c.input_grads[0]->axpy(c.grad_output[0], local);
                           });
}

Var gsrip_penalty(const Var& vec, std::size_t groups, std::size_t iters, PowerIterState& state,
                  IsometryEstimate* estimate) {
  const Tensor& x = vec.value();
  const GroupedMatrix m = group(x.values(), groups);
  IsometryEstimate est = gsrip_penalty(m, iters, state);
  const auto& u = est.inner.u;
  const auto& v = est.inner.v;
  const std::size_t nc = m.columns();
  // d sigma^2(M^T M - I)/dM = 2 sigma M (v u^T + u v^T)
  std::vector<double> sym(nc * nc);
  for (std::size_t i = 0; i < nc; ++i)
    for (std::size_t j = 0; j < nc; ++j) sym[i * nc + j] = v[i] * u[j] + u[i] * v[j];
  std::vector<double> g(m.size(), 0.0);
  const double k = 2.0 * est.inner.sigma;
  for (std::size_t r = 0; r < m.groups(); ++r)
    for (std::size_t j = 0; j < nc; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < nc; ++i) s += m(r, i) * sym[i * nc + j];
      g[r * nc + j] = k * s;
    }
  Tensor local = flat_like(x, g);
  const double penalty = est.penalty;
  if (estimate) *estimate = std::move(est);
  return vec.tape().record("gsrip_penalty", Tensor::scalar(penalty), {vec},
                           [local = std::move(local)](const BackwardContext& c) {
                             if (c.input_grads[0]) c.input_grads[0]->axpy(c.grad_output[0], local);
                           });
}

Var spectral_normalize(const Var& x, std::size_t groups, std::size_t iters, PowerIterState& state,
                       bool update_state) {
  const Tensor& xv = x.value();
  const GroupedMatrix m = group(xv.values(), groups);
  PowerIterState scratch = state;
  SpectralEstimate est = sigma_max_power(m, iters, update_state ? state : scratch);
  const double sigma = est.sigma;
  if (sigma <= 0.0) throw std::invalid_argument("spectral_normalize: zero matrix");
  Tensor out = xv;
  for (double& v : out.values()) v /= sigma;
  Tensor dsigma = flat_like(xv, outer_flat(est.u, est.v, 1.0));
  return x.tape().record(
      "spectral_normalize", std::move(out), {x},
      [sigma, dsigma = std::move(dsigma)](const BackwardContext& c) {
        if (!c.input_grads[0]) return;
        // d(x/s) = dx/s - x (ds)/s^2, ds = <u v^T, dX>
        const Tensor& g = c.grad_output;
        const Tensor& xin = *c.inputs[0];
        double gx = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) gx += g[i] * xin[i];
        Tensor& dst = *c.input_grads[0];
        const double inv = 1.0 / sigma;
        const double k = gx / (sigma * sigma);
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * inv - k * dsigma[i];
      });
}

}  // namespace gsr
