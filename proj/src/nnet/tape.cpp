#include <string>

#include "scdc/error.hpp"
#include "scdc/nnet.hpp"

namespace scdc::nn {

const Tensor& Var::value() const {
  if (tape_ == nullptr) throw ContractError("Var: use of an unbound variable");
  return tape_->value(id_);
}

double Var::scalar() const {
  const Tensor& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ShapeError("Var::scalar on a " + std::to_string(v.rows()) + "x" + std::to_string(v.cols()) + " value");
  }
  return v(0, 0);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (&p.tape() != this) throw ContractError("Tape: operands recorded on different tapes");
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  return push(std::move(n));
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Tensor::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::backward(const Var& output) {
  if (&output.tape() != this) throw ContractError("Tape::backward: output belongs to another tape");
  const Tensor& v = output.value();
  if (v.rows() != 1 || v.cols() != 1) throw ContractError("Tape::backward: seed must be a scalar output");
  if (backward_done_) throw ContractError("Tape::backward: tape already consumed");
  backward_done_ = true;
  if (!nodes_[output.id()].requires_grad) return;

  grad(output.id())(0, 0) += 1.0;
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, id);
    if (n.param != nullptr) {
      if (n.param->grad.rows() != n.value.rows() || n.param->grad.cols() != n.value.cols()) {
        n.param->zero_grad();
      }
      n.param->grad += n.grad;
    }
  }
}

Tensor Tape::gradient(const Var& v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.size() == 0) return Tensor::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

}  // namespace scdc::nn
