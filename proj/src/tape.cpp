#include "star/tape.hpp"

#include "star/errors.hpp"

namespace star {

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(*this);
}

void Tape::check_owner(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw ContractError("Var does not belong to this tape");
  }
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) {
    check_owner(in);
    node.requires_grad = node.requires_grad || nodes_[in.id_].requires_grad;
    node.inputs.push_back(in.id_);
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::backward(Var loss) {
  check_owner(loss);
  if (nodes_[loss.id_].value.size() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " +
                        shape_string(nodes_[loss.id_].value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  nodes_[loss.id_].grad = Tensor::filled(nodes_[loss.id_].value.shape(), 1.0);

  std::vector<Tensor*> input_grads;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.grad.empty() || !node.backward) continue;
    input_grads.clear();
    for (std::size_t in : node.inputs) {
      Node& src = nodes_[in];
      if (!src.requires_grad) {
        input_grads.push_back(nullptr);
        continue;
      }
      if (src.grad.empty()) src.grad = Tensor::zeros(src.value.shape());
      input_grads.push_back(&src.grad);
    }
    node.backward(node.grad, input_grads);
    // Interior gradients are no longer needed once propagated.
    if (!node.inputs.empty()) node.grad = Tensor();
  }
}

Tensor Tape::grad(Var v) const {
  check_owner(v);
  const Node& node = nodes_[v.id_];
  if (node.grad.empty()) return Tensor::zeros(node.value.shape());
  return node.grad;
}

}  // namespace star
