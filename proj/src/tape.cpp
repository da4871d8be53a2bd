#include "nalu/tape.hpp"

#include <string>

#include "nalu/error.hpp"

namespace nalu {

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw Error("invalid tape variable " + std::to_string(v.id));
  return nodes_[v.id];
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (!value.all_finite()) throw NumericError("leaf tensor contains non-finite values");
  Node n;
  n.op = "leaf";
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

std::string_view Tape::op_name(Var v) const { return node(v).op; }

const std::vector<std::size_t>& Tape::inputs(Var v) const { return node(v).inputs; }

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.shape() == n.value.shape()) return n.grad;
  return Tensor::zeros(n.value.shape());
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn fn) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + " produced non-finite values");
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (Var in : inputs) {
    if (in.id >= nodes_.size()) throw Error("op " + std::string(op) + " given an invalid input");
    n.inputs.push_back(in.id);
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::out_grad(std::size_t self) const { return nodes_[self].grad; }

Tensor* Tape::grad_slot(Var input) {
  Node& n = nodes_[input.id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor::zeros(n.value.shape());
  return &n.grad;
}

void Tape::backward(Var loss) {
  const Node& l = node(loss);
  if (l.value.numel() != 1) {
    throw DimensionError("backward requires a scalar loss, got shape " +
                         shape_str(l.value.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  if (!l.requires_grad) return;
  nodes_[loss.id].grad = Tensor(l.value.shape(), 1.0f);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
}

}  // namespace nalu
