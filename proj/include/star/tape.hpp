#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "star/tensor.hpp"

namespace star {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Receives the output gradient and accumulates into each input's gradient.
/// `input_grads[i]` is null when input i does not require a gradient.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> input_grads)>;

/// Reverse-mode gradient tape. Nodes are appended in evaluation order, so a
/// reverse sweep visits every consumer before its producers.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf tracked for gradients.
  Var variable(Tensor value);
  /// Interior node. The backward function is dropped when no input needs a gradient.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn backward);

  bool requires_grad(Var v) const { return nodes_[v.id_].requires_grad; }
  const Tensor& value(Var v) const { return nodes_[v.id_].value; }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every tracked node.
  void backward(Var loss);
  /// Gradient of a leaf after the last backward(); zeros if it received none.
  /// Interior gradients are released during the sweep.
  Tensor grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  void check_owner(Var v) const;

  std::deque<Node> nodes_;
};

}  // namespace star
