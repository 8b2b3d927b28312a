#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "facet/autodiff/tensor.hpp"
#include "facet/error.hpp"

namespace facet::ad {

/// A trainable tensor. `version` is bumped by every optimizer update so that
/// tapes recorded against an older value can be detected.
struct Parameter {
  Tensor value;
  std::uint64_t version = 0;
};

class Tape;

/// Handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode gradient record.
///
/// Nodes are appended in evaluation order, so a reverse sweep visits every
/// node after all of its consumers. A tape is neither copyable nor movable
/// because Vars hold a pointer to it.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = delete;
  Tape& operator=(Tape&&) = delete;

  Var constant(Tensor value) { return push(std::move(value), false, nullptr); }

  /// Leaf whose gradient is wanted (e.g. the input of a grad check).
  Var variable(Tensor value) { return push(std::move(value), true, nullptr); }

  /// Registers a parameter. Registering the same parameter twice yields the
  /// same node, so gradients from every use accumulate in one place.
  Var parameter(const Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
    Var v = push(p.value, true, nullptr);
    param_nodes_.emplace(&p, v.id);
    param_versions_.emplace_back(&p, p.version);
    return v;
  }

  /// Appends an operation result. `needs_grad` should be true when any input
  /// needs a gradient; `fn` then propagates the node's gradient to its inputs.
  Var push(Tensor value, bool needs_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), Tensor{}, needs_grad, std::move(fn)});
    return Var{this, nodes_.size() - 1};
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient accumulated at a node by the last backward(); zeros if none reached it.
  Tensor grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.empty()) return Tensor::zeros_like(n.value);
    return n.grad;
  }

  /// Mutable gradient slot for accumulation, allocated on first touch.
  Tensor& grad_slot(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor::zeros_like(n.value);
    return n.grad;
  }

  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  /// Backpropagates from a scalar output.
  void backward(Var out) {
    if (value(out.id).size() != 1) {
      throw DimensionError("backward(out) requires a scalar output, got shape " +
                           shape_string(value(out.id).shape()));
    }
    backward(out, Tensor(value(out.id).shape(), 1.0));
  }

  /// Backpropagates `seed` = d(loss)/d(out).
  void backward(Var out, const Tensor& seed) {
    if (out.tape != this) throw Error("backward: variable belongs to a different tape");
    for (const auto& [param, version] : param_versions_) {
      if (param->version != version) {
        throw StaleTapeError("tape is stale: a parameter was updated after the forward pass");
      }
    }
    require_same_shape(value(out.id), seed, "backward seed");
    for (Node& n : nodes_) n.grad = Tensor{};
    grad_slot(out.id).matrix() += seed.matrix();
    for (std::size_t i = out.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.grad.empty() || !n.fn) continue;
      n.fn(*this, i);
    }
  }

  /// Gradients for the given parameters, in order. Parameters that did not
  /// take part in the computation get zero gradients.
  std::vector<Tensor> gradients(std::span<const Parameter* const> params) const {
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const Parameter* p : params) {
      auto it = param_nodes_.find(p);
      if (it == param_nodes_.end() || nodes_[it->second].grad.empty()) {
        out.push_back(Tensor::zeros_like(p->value));
      } else {
        out.push_back(nodes_[it->second].grad);
      }
    }
    return out;
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool needs_grad = false;
    BackwardFn fn;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  std::vector<std::pair<const Parameter*, std::uint64_t>> param_versions_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

}  // namespace facet::ad
