#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "methanol/errors.hpp"

namespace methanol {

using Shape = std::vector<int>;

inline std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

template <typename T>
struct NodeT;

// Dense row-major tensor. Storage and gradient buffers are shared so that
// copies are cheap handles onto the same data; `node` links the tensor into
// the compute graph that produced it (null for leaves).
//
// Gradients accumulate additively; nothing here zeroes them implicitly.
template <typename T>
struct TensorT {
  Shape shape;
  std::shared_ptr<std::vector<T>> data;
  std::shared_ptr<std::vector<T>> grad;
  std::shared_ptr<NodeT<T>> node;
  bool requires_grad = false;

  TensorT() = default;

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    validate_shape(shape);
    TensorT t;
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<T>>(numel_of(t.shape), T(0));
    t.requires_grad = requires_grad;
    if (requires_grad) t.grad = std::make_shared<std::vector<T>>(t.data->size(), T(0));
    return t;
  }

  static TensorT from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    validate_shape(shape);
    if (numel_of(shape) != values.size()) {
      throw ShapeError("tensor shape " + shape_str(shape) + " does not match value count " +
                       std::to_string(values.size()));
    }
    TensorT t;
    t.shape = std::move(shape);
    t.data = std::make_shared<std::vector<T>>(std::move(values));
    t.requires_grad = requires_grad;
    if (requires_grad) t.grad = std::make_shared<std::vector<T>>(t.data->size(), T(0));
    return t;
  }

  static TensorT scalar(T value, bool requires_grad = false) {
    return from({1}, {value}, requires_grad);
  }

  std::size_t numel() const { return data ? data->size() : 0; }

  int rank() const { return static_cast<int>(shape.size()); }

  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

  std::vector<T>& values() { return *data; }
  const std::vector<T>& values() const { return *data; }

  std::vector<T>& grads() {
    if (!grad) throw Error("tensor has no gradient buffer (requires_grad is false)");
    return *grad;
  }
  const std::vector<T>& grads() const {
    if (!grad) throw Error("tensor has no gradient buffer (requires_grad is false)");
    return *grad;
  }

  T item() const {
    if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape));
    return (*data)[0];
  }

  void zero_grad() {
    if (grad) std::fill(grad->begin(), grad->end(), T(0));
  }

  // Same storage, detached from the graph and from gradient flow.
  TensorT detached() const {
    TensorT t;
    t.shape = shape;
    t.data = data;
    return t;
  }

 private:
  static void validate_shape(const Shape& shape) {
    for (int d : shape) {
      if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
    }
  }
};

// One op record: the inputs it consumed, a view of the output it produced
// (without `node`, so records do not form ownership cycles), and the rule
// that routes the output gradient back into the inputs.
template <typename T>
struct NodeT {
  const char* op = "";
  std::vector<TensorT<T>> parents;
  TensorT<T> out;
  std::function<void(NodeT<T>&)> backprop;
};

namespace detail {
inline thread_local bool t_grad_enabled = true;
}

inline bool grad_enabled() { return detail::t_grad_enabled; }

// RAII switch that disables graph construction on the current thread.
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::t_grad_enabled) { detail::t_grad_enabled = false; }
  ~NoGradGuard() { detail::t_grad_enabled = prev; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// Reverse-mode sweep from a scalar root. Builds the topological order of the
// graph below `root`, then applies each backward rule exactly once. `seed`
// is added to the root gradient (callers batching samples pass 1/batch).
template <typename T>
void backward(const TensorT<T>& root, T seed = T(1)) {
  if (root.numel() != 1) {
    throw ShapeError("backward root must be scalar, got " + shape_str(root.shape));
  }
  if (!root.requires_grad) return;
  (*root.grad)[0] += seed;
  if (!root.node) return;

  std::vector<NodeT<T>*> topo;
  std::unordered_set<NodeT<T>*> visited;
  // Iterative post-order DFS; graphs can be deep for long sequences.
  std::vector<std::pair<NodeT<T>*, std::size_t>> stack;
  stack.emplace_back(root.node.get(), 0);
  visited.insert(root.node.get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      NodeT<T>* child = n->parents[idx].node.get();
      ++idx;
      if (child && !visited.count(child)) {
        visited.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      topo.push_back(n);
      stack.pop_back();
    }
  }
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    NodeT<T>* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

using Tensor = TensorT<float>;

}  // namespace methanol
