#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string_view>
#include <vector>

#include "nalu/tensor.hpp"

namespace nalu {

// Handle to a node on a Tape.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
};

// Reverse-mode autodiff tape. Nodes are appended in creation order, so node ids
// are a valid topological order and backward is a single reverse sweep.
// Not thread-safe; use one tape per thread.
class Tape {
 public:
  // Called during backward with the tape and the id of the node being
  // differentiated. Implementations read tape.out_grad(self) and accumulate into
  // tape.grad_slot(input) for every input that requires a gradient.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;
  // Gradient accumulated by the last backward(); zeros when v was unreached.
  Tensor grad(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and sweeps every node in reverse creation order.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  std::string_view op_name(Var v) const;
  const std::vector<std::size_t>& inputs(Var v) const;

  // Op-implementation interface. record() rejects non-finite values.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn fn);
  const Tensor& out_grad(std::size_t self) const;
  // Accumulator for an input's gradient, allocated on first use. Returns
  // nullptr for inputs that do not require gradients.
  Tensor* grad_slot(Var input);

 private:
  struct Node {
    std::string_view op;
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  const Node& node(Var v) const;

  std::vector<Node> nodes_;
};

}  // namespace nalu
