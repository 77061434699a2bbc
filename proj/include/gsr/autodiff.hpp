#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>

#include "gsr/tensor.hpp"

namespace gsr {

/// A named trainable array. `grad` is written by Tape::backward.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string name, Tensor value);

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Gradient of the last backward root with respect to this node.
  const Tensor& grad() const;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// What a node's local derivative sees during the reverse sweep. Entries of
/// `input_grads` are null for inputs that do not need a gradient.
struct BackwardContext {
  const Tensor& output;
  const Tensor& grad_output;
  std::span<const Tensor* const> inputs;
  std::span<Tensor* const> input_grads;
};

/// Append-only computation graph. Creation order is a topological order, so
/// backward is a single reverse sweep.
class Tape {
 public:
  using BackwardFn = std::function<void(const BackwardContext&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf that receives a gradient but is not tied to a Parameter.
  Var variable(Tensor value);
  /// Leaf whose gradient is accumulated into `p.grad` by backward.
  Var parameter(Parameter& p);

  /// Records an op node. Rejects non-finite forward values.
  Var record(std::string_view op, Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);

  /// Zeroes all gradients (including those of attached parameters), then
  /// accumulates d(root)/d(node) for every node recorded before `root`.
  void backward(const Var& root);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::size_t id) const;
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node);

  std::deque<Node> nodes_;
  bool has_gradients_ = false;
};

}  // namespace gsr
