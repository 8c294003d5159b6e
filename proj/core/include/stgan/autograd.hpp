#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "stgan/tensor.hpp"

namespace stgan {

/// Handle to a node in a Graph.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over whole tensors.
///
/// Nodes are appended in evaluation order, so walking the tape backwards is a
/// valid topological order. A graph is single-use: build, call backward()
/// once, discard. Parameter leaves borrow their storage and flush their
/// gradient into an external accumulator when backward() finishes.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return record_; }

  Var constant(Tensor<T> value) {
    Node& n = push();
    n.owned = std::move(value);
    return Var{last()};
  }

  // Borrowed, non-differentiable. `value` must outlive the graph.
  Var constant_ref(const Tensor<T>& value) {
    Node& n = push();
    n.ref = &value;
    return Var{last()};
  }

  // Borrowed, differentiable. On backward() the gradient is added to `sink`.
  Var leaf(const Tensor<T>& value, Tensor<T>* sink) {
    Node& n = push();
    n.ref = &value;
    n.sink = sink;
    n.requires_grad = record_ && sink != nullptr;
    return Var{last()};
  }

  // Owned, differentiable; read the gradient back with grad().
  Var variable(Tensor<T> value) {
    Node& n = push();
    n.owned = std::move(value);
    n.requires_grad = record_;
    return Var{last()};
  }

  const Tensor<T>& value(Var v) const { return value(v.id); }
  const Tensor<T>& value(int id) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(id));
    return n.ref ? *n.ref : n.owned;
  }
  bool requires_grad(Var v) const { return requires_grad(v.id); }
  bool requires_grad(int id) const {
    return nodes_.at(static_cast<std::size_t>(id)).requires_grad;
  }

  bool has_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).has_grad; }
  const Tensor<T>& grad(Var v) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
    if (!n.has_grad) throw ValidationError("node has no gradient");
    return n.grad;
  }

  /// Gradient buffer of node `id`, allocated as zeros on first use.
  Tensor<T>& grad_buffer(int id) {
    Node& n = nodes_.at(static_cast<std::size_t>(id));
    if (!n.has_grad) {
      n.grad = Tensor<T>(value(id).shape());
      n.has_grad = true;
    }
    return n.grad;
  }

  /// Appends a computed node. The backward closure is kept only when the
  /// graph records and at least one parent needs a gradient.
  Var emit(Tensor<T> value, std::initializer_list<Var> parents, BackwardFn fn) {
    return emit(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(fn));
  }
  Var emit(Tensor<T> value, std::span<const Var> parents, BackwardFn fn) {
    bool needs = false;
    for (Var p : parents) needs = needs || requires_grad(p);
    Node& n = push();
    n.owned = std::move(value);
    if (record_ && needs) {
      n.requires_grad = true;
      n.fn = std::move(fn);
    }
    return Var{last()};
  }

  /// Back-propagates from a scalar root.
  void backward(Var root) {
    if (!record_) throw ValidationError("backward() on a non-recording graph");
    if (value(root).size() != 1) throw ValidationError("backward() root must be scalar");
    if (!requires_grad(root)) return;
    grad_buffer(root.id)[0] = T{1};
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.has_grad && n.fn) n.fn(*this, i);
    }
    for (Node& n : nodes_) {
      if (n.sink && n.has_grad) {
        if (n.sink->empty()) *n.sink = Tensor<T>(n.grad.shape());
        *n.sink += n.grad;
      }
    }
  }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* ref = nullptr;
    Tensor<T>* sink = nullptr;
    Tensor<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn fn;
  };

  Node& push() { return nodes_.emplace_back(); }
  int last() const { return static_cast<int>(nodes_.size()) - 1; }

  bool record_;
  std::deque<Node> nodes_;
};

}  // namespace stgan
