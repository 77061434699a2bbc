#pragma once

#include <cstddef>

#include "gsr/autodiff.hpp"

namespace gsr {

// Elementwise binary ops accept equal shapes, or one operand holding a
// single value (broadcast against the other).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope = 0.2);
Var tanh(const Var& a);
Var square(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
Var reshape(const Var& a, Shape shape);

/// [m x k] * [k x n] -> [m x n].
Var matmul(const Var& a, const Var& b);

/// x [B x d] with a length-d vector added to (or multiplied into) every row.
Var add_rows(const Var& x, const Var& row);
Var mul_rows(const Var& x, const Var& row);

/// Row `index` of a [K x d] table as a length-d vector; the gradient is
/// scattered back into that row only.
Var select_row(const Var& table, std::size_t index);

struct BatchStats {
  Var mean;
  Var var;
};

/// Per-feature mean and biased (divide by B) variance over the batch axis.
BatchStats batch_stats(const Var& x);

/// (x - mean) / sqrt(var + eps), row-broadcast.
Var normalize(const Var& x, const Var& mean, const Var& var, double eps);

}  // namespace gsr
