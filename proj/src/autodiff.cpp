#include "gsr/autodiff.hpp"

#include <vector>

namespace gsr {

Parameter::Parameter(std::string name_, Tensor value_)
    : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

const Tensor& Var::value() const { return tape_->value(id_); }

const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  require_finite(value, "constant");
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  require_finite(value, "variable");
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  if (!p.value.all_finite()) throw NonFiniteError("parameter " + p.name + ": non-finite value");
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::record(std::string_view op, Tensor value, std::initializer_list<Var> inputs,
                 BackwardFn fn) {
  if (!value.all_finite()) throw NonFiniteError(std::string(op) + ": non-finite value");
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (v.tape_ != this) throw std::logic_error(std::string(op) + ": input from another tape");
    n.inputs.push_back(v.id_);
    n.requires_grad = n.requires_grad || nodes_[v.id_].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

const Tensor& Tape::grad(std::size_t id) const {
  if (!has_gradients_ || !nodes_[id].requires_grad) {
    throw std::logic_error("gradient requested for a node without one");
  }
  return nodes_[id].grad;
}

void Tape::backward(const Var& root) {
  if (root.tape_ != this) throw std::logic_error("backward: root from another tape");
  if (root.value().size() != 1) {
    throw ShapeError("backward: root must be scalar, got " + shape_string(root.shape()));
  }
  const std::size_t last = root.id_;
  for (std::size_t i = 0; i <= last; ++i) {
    Node& n = nodes_[i];
    if (!n.requires_grad) continue;
    n.grad = Tensor(n.value.shape());
    if (n.param) n.param->grad = Tensor(n.param->value.shape());
  }
  has_gradients_ = true;
  if (!nodes_[last].requires_grad) return;
  nodes_[last].grad.fill(1.0);

  std::vector<const Tensor*> in_values;
  std::vector<Tensor*> in_grads;
  for (std::size_t i = last + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward) continue;
    in_values.clear();
    in_grads.clear();
    for (std::size_t p : n.inputs) {
      in_values.push_back(&nodes_[p].value);
      in_grads.push_back(nodes_[p].requires_grad ? &nodes_[p].grad : nullptr);
    }
    n.backward(BackwardContext{n.value, n.grad, in_values, in_grads});
  }
  for (std::size_t i = 0; i <= last; ++i) {
    Node& n = nodes_[i];
    if (n.param) n.param->grad.axpy(1.0, n.grad);
  }
}

}  // namespace gsr
