#include "gcvae/tape.hpp"

#include "gcvae/errors.hpp"

namespace gcvae {

const Tensor& Var::value() const { return tape_->value(id_); }

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

const Tensor& BackwardContext::input(std::size_t k) const { return tape.value(inputs[k]); }

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{"parameter", std::move(value), {}, {}, true, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, false, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) {
      throw ContractError("op input refers to a node that is not on this tape");
    }
    needs = needs || nodes_[in].requires_grad;
  }
  Node node{std::string(kind), std::move(value), std::move(inputs), {}, needs, false};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(Var loss) const {
  if (&loss.tape() != this) {
    throw ContractError("backward() called with a Var from another tape");
  }
  const std::size_t root = loss.id();
  if (value(root).numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(value(root).shape()));
  }

  std::vector<Tensor> grads(root + 1);
  Gradients result;
  if (!nodes_[root].requires_grad) return result;
  grads[root] = Tensor(value(root).shape(), 1.0);

  std::vector<Tensor*> input_ptrs;
  for (std::size_t id = root + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!node.requires_grad || grads[id].empty()) continue;
    if (node.is_parameter) {
      result.emplace(id, std::move(grads[id]));
      continue;
    }
    input_ptrs.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const std::size_t in = node.inputs[k];
      if (!nodes_[in].requires_grad) continue;
      if (grads[in].empty()) grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
      input_ptrs[k] = &grads[in];
    }
    BackwardContext ctx{*this, node.inputs, node.value, grads[id], input_ptrs};
    node.backward(ctx);
    grads[id] = Tensor();
  }
  return result;
}

}  // namespace gcvae
