#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gcvae/tensor.hpp"

namespace gcvae {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// What a node's backward rule sees: its inputs, its output and the incoming gradient.
/// `input_grad(k)` is null when input k does not lead to any tracked parameter.
struct BackwardContext {
  const Tape& tape;
  std::span<const std::size_t> inputs;
  const Tensor& output;
  const Tensor& grad;
  std::span<Tensor* const> input_grads;

  const Tensor& input(std::size_t k) const;
  Tensor* input_grad(std::size_t k) const { return input_grads[k]; }
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Gradients of a scalar loss keyed by parameter node id.
using Gradients = std::unordered_map<std::size_t, Tensor>;

/// Append-only record of forward operations. Node ids are creation indices, so
/// the node list is topologically ordered by construction and backward walks it
/// in strictly decreasing id order.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient from backward().
  Var parameter(Tensor value);
  /// Leaf treated as a constant.
  Var constant(Tensor value);

  /// Appends an op node. `backward` is dropped when no input requires a gradient.
  Var record(std::string_view kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const std::string& kind(std::size_t id) const { return nodes_.at(id).kind; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse-mode sweep from a scalar loss. Returns d loss / d p for every parameter
  /// leaf in the loss's ancestry; constants and unrelated parameters are absent.
  Gradients backward(Var loss) const;

 private:
  struct Node {
    std::string kind;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool is_parameter = false;
  };
  std::vector<Node> nodes_;
};

}  // namespace gcvae
