#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "cbgt/errors.hpp"
#include "cbgt/numerics/param_store.hpp"
#include "cbgt/numerics/tensor.hpp"

namespace cbgt::numerics {

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::size_t id = npos;
  bool valid() const noexcept { return id != npos; }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so replaying
/// them backwards visits every node after all of its consumers.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& out_grad)>;

  Var constant(Tensor<T> value) {
    nodes_.push_back(Node{std::move(value), {}, false, {}, nullptr, 0});
    return Var{nodes_.size() - 1};
  }

  /// Leaf bound to a store entry; backward() adds its gradient into the
  /// store's gradient buffer.
  Var parameter(ParamStore<T>& store, std::size_t index) {
    const bool trainable = store.entry(index).trainable;
    nodes_.push_back(Node{store.value(index), {}, trainable, {}, trainable ? &store : nullptr, index});
    return Var{nodes_.size() - 1};
  }

  /// Records an op output. `backward` is dropped when no input needs a
  /// gradient.
  Var record(Tensor<T> value, bool requires_grad, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), {}, requires_grad,
                          requires_grad ? std::move(backward) : BackwardFn{}, nullptr, 0});
    return Var{nodes_.size() - 1};
  }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer of `v`, allocated as zeros on first access.
  Tensor<T>& grad(Var v) {
    auto& n = node(v);
    if (n.grad.empty()) n.grad = Tensor<T>(n.value.shape());
    return n.grad;
  }

  bool has_grad(Var v) const { return !node(v).grad.empty(); }

  /// Seeds d(loss)/d(loss) = 1 and replays the tape. Parameter gradients are
  /// accumulated (not overwritten) into their stores.
  void backward(Var loss) {
    if (consumed_) throw InternalError("tape already replayed");
    const auto& l = node(loss);
    if (l.value.size() != 1) {
      throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                  shape_string(l.value.shape()));
    }
    consumed_ = true;
    if (!l.requires_grad) return;
    grad(loss)[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.grad.empty()) continue;
      if (n.backward) {
        // Callbacks only touch grads of earlier nodes; `nodes_` is not
        // resized during replay.
        n.backward(*this, n.grad);
      } else if (n.store) {
        auto& dst = n.store->grad(n.index);
        const auto& g = n.grad;
        for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
      }
    }
  }

  bool consumed() const noexcept { return consumed_; }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad;
    BackwardFn backward;
    ParamStore<T>* store;
    std::size_t index;
  };

  Node& node(Var v) {
    if (v.id >= nodes_.size()) throw std::out_of_range("invalid tape variable");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw std::out_of_range("invalid tape variable");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace cbgt::numerics
