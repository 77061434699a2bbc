#include "gsr/ops.hpp"

#include <Eigen/Core>
#include <cmath>

namespace gsr {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(const Tensor& t) { return ConstMap(t.data(), t.rows(), t.cols()); }
MutMap as_matrix(Tensor& t) { return MutMap(t.data(), t.rows(), t.cols()); }

// Flat views for elementwise work and for rank-1 operands broadcast over rows.
Eigen::Map<const Eigen::ArrayXd> as_array(const Tensor& t) {
  return Eigen::Map<const Eigen::ArrayXd>(t.data(), static_cast<Eigen::Index>(t.size()));
}
Eigen::Map<Eigen::ArrayXd> as_array(Tensor& t) {
  return Eigen::Map<Eigen::ArrayXd>(t.data(), static_cast<Eigen::Index>(t.size()));
}
Eigen::Map<const Eigen::RowVectorXd> as_row(const Tensor& t) {
  return Eigen::Map<const Eigen::RowVectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
}
Eigen::Map<Eigen::RowVectorXd> as_row(Tensor& t) {
  return Eigen::Map<Eigen::RowVectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
}

enum class Broadcast { same, a_scalar, b_scalar };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::same;
  if (a.size() == 1 && a.rank() == 0) return Broadcast::a_scalar;
  if (b.size() == 1 && b.rank() == 0) return Broadcast::b_scalar;
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                   shape_string(b.shape()));
}

// Adds `g * factor(i)` into a gradient slot, reducing when the operand was a
// broadcast scalar.
template <typename Factor>
void accumulate(Tensor* dst, const Tensor& g, bool reduce, Factor factor) {
  if (!dst) return;
  if (reduce) {
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * factor(i);
    (*dst)[0] += s;
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) (*dst)[i] += g[i] * factor(i);
  }
}

template <typename F>
Tensor map_binary(const Tensor& a, const Tensor& b, Broadcast kind, F f) {
  Tensor out(kind == Broadcast::a_scalar ? b.shape() : a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double av = kind == Broadcast::a_scalar ? a[0] : a[i];
    const double bv = kind == Broadcast::b_scalar ? b[0] : b[i];
    out[i] = f(av, bv);
  }
  return out;
}

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(t.shape()));
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  const auto kind = broadcast_kind("add", a.value(), b.value());
  Tensor out = map_binary(a.value(), b.value(), kind, [](double x, double y) { return x + y; });
  return a.tape().record("add", std::move(out), {a, b}, [kind](const BackwardContext& c) {
    auto one = [](std::size_t) { return 1.0; };
    accumulate(c.input_grads[0], c.grad_output, kind == Broadcast::a_scalar, one);
    accumulate(c.input_grads[1], c.grad_output, kind == Broadcast::b_scalar, one);
  });
}

Var sub(const Var& a, const Var& b) {
  const auto kind = broadcast_kind("sub", a.value(), b.value());
  Tensor out = map_binary(a.value(), b.value(), kind, [](double x, double y) { return x - y; });
  return a.tape().record("sub", std::move(out), {a, b}, [kind](const BackwardContext& c) {
    accumulate(c.input_grads[0], c.grad_output, kind == Broadcast::a_scalar,
               [](std::size_t) { return 1.0; });
    accumulate(c.input_grads[1], c.grad_output, kind == Broadcast::b_scalar,
               [](std::size_t) { return -1.0; });
  });
}

Var mul(const Var& a, const Var& b) {
  const auto kind = broadcast_kind("mul", a.value(), b.value());
  Tensor out = map_binary(a.value(), b.value(), kind, [](double x, double y) { return x * y; });
  return a.tape().record("mul", std::move(out), {a, b}, [kind](const BackwardContext& c) {
    const Tensor& av = *c.inputs[0];
    const Tensor& bv = *c.inputs[1];
    accumulate(c.input_grads[0], c.grad_output, kind == Broadcast::a_scalar,
               [&](std::size_t i) { return kind == Broadcast::b_scalar ? bv[0] : bv[i]; });
    accumulate(c.input_grads[1], c.grad_output, kind == Broadcast::b_scalar,
               [&](std::size_t i) { return kind == Broadcast::a_scalar ? av[0] : av[i]; });
  });
}

Var scale(const Var& a, double k) {
  Tensor out = map_unary(a.value(), [k](double x) { return k * x; });
  return a.tape().record("scale", std::move(out), {a}, [k](const BackwardContext& c) {
    accumulate(c.input_grads[0], c.grad_output, false, [k](std::size_t) { return k; });
  });
}

Var add_scalar(const Var& a, double k) {
  Tensor out = map_unary(a.value(), [k](double x) { return x + k; });
  return a.tape().record("add_scalar", std::move(out), {a}, [](const BackwardContext& c) {
    accumulate(c.input_grads[0], c.grad_output, false, [](std::size_t) { return 1.0; });
  });
}

Var relu(const Var& a) {
  Tensor out = map_unary(a.value(), [](double x) { return x > 0.0 ? x : 0.0; });
  return a.tape().record("relu", std::move(out), {a}, [](const BackwardContext& c) {
    const Tensor& x = *c.inputs[0];
    accumulate(c.input_grads[0], c.grad_output, false,
               [&](std::size_t i) { return x[i] > 0.0 ? 1.0 : 0.0; });
  });
}

Var leaky_relu(const Var& a, double slope) {
  const Tensor& x = a.value();
  Tensor out(x.shape());
  const auto xa = as_array(x);
  // max/min vectorize where a select does not; the result is exact either way.
  as_array(out) = xa.max(0.0) + slope * xa.min(0.0);
  return a.tape().record("leaky_relu", std::move(out), {a}, [slope](const BackwardContext& c) {
    if (!c.input_grads[0]) return;
    const auto xa = as_array(*c.inputs[0]);
    const auto g = as_array(c.grad_output);
    as_array(*c.input_grads[0]) +=
        g * (xa > 0.0).select(Eigen::ArrayXd::Constant(xa.size(), 1.0), slope);
  });
}

Var tanh(const Var& a) {
  Tensor out = map_unary(a.value(), [](double x) { return std::tanh(x); });
  return a.tape().record("tanh", std::move(out), {a}, [](const BackwardContext& c) {
    const Tensor& y = c.output;
    accumulate(c.input_grads[0], c.grad_output, false,
               [&](std::size_t i) { return 1.0 - y[i] * y[i]; });
  });
}

Var square(const Var& a) {
  Tensor out = map_unary(a.value(), [](double x) { return x * x; });
  return a.tape().record("square", std::move(out), {a}, [](const BackwardContext& c) {
    const Tensor& x = *c.inputs[0];
    accumulate(c.input_grads[0], c.grad_output, false, [&](std::size_t i) { return 2.0 * x[i]; });
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape().record("sum", Tensor::scalar(s), {a}, [](const BackwardContext& c) {
    if (!c.input_grads[0]) return;
    const double g = c.grad_output[0];
    for (double& v : c.input_grads[0]->values()) v += g;
  });
}

Var mean(const Var& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean of empty tensor");
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return a.tape().record("mean", Tensor::scalar(s / static_cast<double>(n)), {a},
                         [n](const BackwardContext& c) {
                           if (!c.input_grads[0]) return;
                           const double g = c.grad_output[0] / static_cast<double>(n);
                           for (double& v : c.input_grads[0]->values()) v += g;
                         });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return a.tape().record("reshape", std::move(out), {a}, [](const BackwardContext& c) {
    accumulate(c.input_grads[0], c.grad_output, false, [](std::size_t) { return 1.0; });
  });
}

Var matmul(const Var& a, const Var& b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank("matmul", av, 2);
  require_rank("matmul", bv, 2);
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: inner dimensions disagree " + shape_string(av.shape()) + " x " +
                     shape_string(bv.shape()));
  }
  Tensor out(Shape{av.rows(), bv.cols()});
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  return a.tape().record("matmul", std::move(out), {a, b}, [](const BackwardContext& c) {
    const auto g = as_matrix(c.grad_output);
    if (c.input_grads[0]) {
      as_matrix(*c.input_grads[0]).noalias() += g * as_matrix(*c.inputs[1]).transpose();
    }
    if (c.input_grads[1]) {
      as_matrix(*c.input_grads[1]).noalias() += as_matrix(*c.inputs[0]).transpose() * g;
    }
  });
}

namespace {

void require_row_compatible(const char* op, const Tensor& x, const Tensor& row) {
  require_rank(op, x, 2);
  require_rank(op, row, 1);
  if (row.size() != x.cols()) {
    throw ShapeError(std::string(op) + ": row of length " + std::to_string(row.size()) +
                     " against " + shape_string(x.shape()));
  }
}

}  // namespace

Var add_rows(const Var& x, const Var& row) {
  require_row_compatible("add_rows", x.value(), row.value());
  Tensor out = x.value();
  as_matrix(out).rowwise() += as_row(row.value());
  return x.tape().record("add_rows", std::move(out), {x, row}, [](const BackwardContext& c) {
    const auto g = as_matrix(c.grad_output);
    if (c.input_grads[0]) as_matrix(*c.input_grads[0]) += g;
    if (c.input_grads[1]) {
      as_row(*c.input_grads[1]) += g.colwise().sum();
    }
  });
}

Var mul_rows(const Var& x, const Var& row) {
  require_row_compatible("mul_rows", x.value(), row.value());
  Tensor out(x.value().shape());
  as_matrix(out).noalias() = as_matrix(x.value()) * as_row(row.value()).asDiagonal();
  return x.tape().record("mul_rows", std::move(out), {x, row}, [](const BackwardContext& c) {
    const auto g = as_matrix(c.grad_output);
    if (c.input_grads[0]) {
      as_matrix(*c.input_grads[0]) += g * as_row(*c.inputs[1]).asDiagonal();
    }
    if (c.input_grads[1]) {
      as_row(*c.input_grads[1]) += g.cwiseProduct(as_matrix(*c.inputs[0])).colwise().sum();
    }
  });
}

Var select_row(const Var& table, std::size_t index) {
  const Tensor& t = table.value();
  require_rank("select_row", t, 2);
  if (index >= t.rows()) {
    throw std::out_of_range("select_row: row " + std::to_string(index) + " of " +
                            shape_string(t.shape()));
  }
  const std::size_t d = t.cols();
  Tensor out(Shape{d});
  std::copy_n(t.data() + index * d, d, out.data());
  return table.tape().record("select_row", std::move(out), {table},
                             [index, d](const BackwardContext& c) {
                               if (!c.input_grads[0]) return;
                               double* dst = c.input_grads[0]->data() + index * d;
                               for (std::size_t j = 0; j < d; ++j) dst[j] += c.grad_output[j];
                             });
}

BatchStats batch_stats(const Var& x) {
  const Tensor& xv = x.value();
  require_rank("batch_stats", xv, 2);
  const std::size_t batch = xv.rows();
  if (batch < 2) throw ShapeError("batch_stats: batch size must be at least 2");
  const double inv_b = 1.0 / static_cast<double>(batch);
  const auto xm = as_matrix(xv);

  Tensor mu(Shape{xv.cols()});
  Eigen::Map<Eigen::RowVectorXd>(mu.data(), mu.size()) = xm.colwise().sum() * inv_b;
  Tensor var(Shape{xv.cols()});
  {
    const auto mrow = Eigen::Map<const Eigen::RowVectorXd>(mu.data(), mu.size());
    Eigen::Map<Eigen::RowVectorXd>(var.data(), var.size()) =
        (xm.rowwise() - mrow).array().square().colwise().sum() * inv_b;
  }

  Var mean_node = x.tape().record("batch_mean", mu, {x}, [inv_b](const BackwardContext& c) {
    if (!c.input_grads[0]) return;
    const auto g = Eigen::Map<const Eigen::RowVectorXd>(c.grad_output.data(), c.grad_output.size());
    as_matrix(*c.input_grads[0]).rowwise() += g * inv_b;
  });
  Var var_node = x.tape().record(
      "batch_var", std::move(var), {x, mean_node}, [inv_b](const BackwardContext& c) {
        // d var_j / d x_ij = 2 (x_ij - mu_j) / B; the path through the mean
        // contributes sum_i 2 (x_ij - mu_j) / B = 0, so the mean input gets none.
        if (!c.input_grads[0]) return;
        const auto xm = as_matrix(*c.inputs[0]);
        const auto mrow = Eigen::Map<const Eigen::RowVectorXd>(c.inputs[1]->data(),
                                                                c.inputs[1]->size());
        const auto g = Eigen::Map<const Eigen::RowVectorXd>(c.grad_output.data(),
                                                             c.grad_output.size());
        as_matrix(*c.input_grads[0]).array() +=
            ((xm.rowwise() - mrow).array().rowwise() * (g.array() * (2.0 * inv_b)));
      });
  return {mean_node, var_node};
}

Var normalize(const Var& x, const Var& mu, const Var& var, double eps) {
  const Tensor& xv = x.value();
  require_row_compatible("normalize", xv, mu.value());
  require_row_compatible("normalize", xv, var.value());
  if (!(eps > 0.0)) throw std::invalid_argument("normalize: eps must be positive");

  Tensor out(xv.shape());
  {
    const auto mrow = Eigen::Map<const Eigen::RowVectorXd>(mu.value().data(), mu.value().size());
    const Eigen::RowVectorXd inv_std =
        (Eigen::Map<const Eigen::RowVectorXd>(var.value().data(), var.value().size()).array() +
         eps)
            .rsqrt();
    as_matrix(out) = ((as_matrix(xv).rowwise() - mrow).array().rowwise() * inv_std.array());
  }
  return x.tape().record(
      "normalize", std::move(out), {x, mu, var}, [eps](const BackwardContext& c) {
        const auto xm = as_matrix(*c.inputs[0]);
        const auto mrow = Eigen::Map<const Eigen::RowVectorXd>(c.inputs[1]->data(),
                                                                c.inputs[1]->size());
        const Eigen::RowVectorXd v =
            Eigen::Map<const Eigen::RowVectorXd>(c.inputs[2]->data(), c.inputs[2]->size());
        const Eigen::RowVectorXd inv_std = (v.array() + eps).rsqrt();
        const auto g = as_matrix(c.grad_output);
        if (c.input_grads[0]) {
          as_matrix(*c.input_grads[0]).array() += g.array().rowwise() * inv_std.array();
        }
        if (c.input_grads[1]) {
          Eigen::Map<Eigen::RowVectorXd>(c.input_grads[1]->data(), c.input_grads[1]->size())
              .array() -= g.colwise().sum().array() * inv_std.array();
        }
        if (c.input_grads[2]) {
          const Eigen::RowVectorXd centered_dot =
              (g.array() * (xm.rowwise() - mrow).array()).colwise().sum();
          Eigen::Map<Eigen::RowVectorXd>(c.input_grads[2]->data(), c.input_grads[2]->size())
              .array() += centered_dot.array() * (-0.5) * inv_std.array().cube();
        }
      });
}

}  // namespace gsr
