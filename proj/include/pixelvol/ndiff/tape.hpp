#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "pixelvol/ndiff/array.hpp"

namespace pixelvol::ndiff {

template <typename T>
class Tape;

// Lightweight handle to a tape node. Ops are recorded by free functions that
// take and return Vars; the tape owns values and gradient buffers.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int32_t id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Record of one forward pass. Nodes are appended in execution order, so the
// list is topologically sorted by construction and backward is a single
// reverse sweep that visits each node at most once. A tape is single-threaded;
// parallelism happens above it by running independent tapes per ray chunk.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, const std::vector<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(const Array<T>& value) {
    nodes_.push_back(Node{value, {}, nullptr, value.requires_grad()});
    return Var<T>{this, int32_t(nodes_.size() - 1)};
  }

  Var<T> constant(const Array<T>& value) { return leaf(value.with_requires_grad(false)); }

  template <class Fn>
  Var<T> make_node(Array<T> value, std::span<const Var<T>> inputs, Fn&& backward,
                   const char* op_name) {
    bool needs = false;
    for (const Var<T>& v : inputs) {
      if (v.tape != this) throw std::invalid_argument(std::string(op_name) + ": input from another tape");
      needs = needs || nodes_[size_t(v.id)].needs_grad;
    }
    if (finite_checks_enabled()) check_finite(value.values(), op_name);
    nodes_.push_back(Node{std::move(value), {}, needs ? Backward(std::forward<Fn>(backward)) : nullptr, needs});
    return Var<T>{this, int32_t(nodes_.size() - 1)};
  }

  template <class Fn>
  Var<T> make_node(Array<T> value, std::initializer_list<Var<T>> inputs, Fn&& backward,
                   const char* op_name) {
    return make_node(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
                     std::forward<Fn>(backward), op_name);
  }

  const Array<T>& value(Var<T> v) const { return nodes_[size_t(v.id)].value; }
  bool needs_grad(Var<T> v) const { return nodes_[size_t(v.id)].needs_grad; }
  size_t size() const { return nodes_.size(); }

  // Gradient accumulation buffer, zero-initialized on first touch.
  std::vector<T>& grad_buffer(Var<T> v) {
    Node& n = nodes_[size_t(v.id)];
    if (n.grad.empty()) n.grad.assign(size_t(n.value.size()), T(0));
    return n.grad;
  }

  // Gradient of the last backward pass; zeros if the node was unreachable.
  Array<T> grad(Var<T> v) const {
    const Node& n = nodes_[size_t(v.id)];
    if (n.grad.empty()) return Array<T>::zeros(n.value.shape());
    return Array<T>(n.value.shape(), n.grad);
  }
  bool has_grad(Var<T> v) const { return !nodes_[size_t(v.id)].grad.empty(); }

  void backward(Var<T> loss, T seed = T(1)) {
    if (!loss.valid() || loss.tape != this) throw std::invalid_argument("backward: loss not on this tape");
    if (nodes_[size_t(loss.id)].value.size() != 1)
      throw std::invalid_argument("backward: loss must be scalar");
    grad_buffer(loss)[0] += seed;
    sweep(loss.id);
  }

  // Seeds output gradients directly; used to chain tapes (e.g. feature maps
  // consumed by per-chunk render tapes).
  void backward_seeded(const std::vector<std::pair<Var<T>, std::span<const T>>>& seeds) {
    int32_t top = -1;
    for (const auto& [v, g] : seeds) {
      if (v.tape != this) throw std::invalid_argument("backward_seeded: var not on this tape");
      if (int64_t(g.size()) != nodes_[size_t(v.id)].value.size())
        throw std::invalid_argument("backward_seeded: seed size mismatch");
      std::vector<T>& buf = grad_buffer(v);
      for (size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
      top = std::max(top, v.id);
    }
    if (top >= 0) sweep(top);
  }

  void reset_grads() {
    for (Node& n : nodes_) n.grad.clear();
  }

 private:
  struct Node {
    Array<T> value;
    std::vector<T> grad;
    Backward backward;  // null for leaves and grad-free subgraphs
    bool needs_grad = false;
  };

  void sweep(int32_t from) {
    for (int32_t i = from; i >= 0; --i) {
      Node& n = nodes_[size_t(i)];
      if (!n.grad.empty() && n.backward) n.backward(*this, n.grad);
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace pixelvol::ndiff
