#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <vector>

#include "mrnet/common.hpp"

namespace mrnet {

// Dense row-major tensor of rank 1..3. Storage is templated on the scalar
// type: float for training, double for finite-difference verification.

using Shape = std::vector<int>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

template <typename S>
struct TensorNode {
  Shape shape;
  std::vector<S> value;
  std::vector<S> grad;  // empty means all-zero; allocated on first write
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), S(0));
  }
};

template <typename S>
class TensorT {
 public:
  TensorT() = default;

  static TensorT zeros(Shape shape, bool requires_grad = false) {
    return with_value(std::move(shape), S(0), requires_grad);
  }

  static TensorT full(Shape shape, S v, bool requires_grad = false) {
    return with_value(std::move(shape), v, requires_grad);
  }

  static TensorT from(Shape shape, std::vector<S> data,
                      bool requires_grad = false) {
    if (shape.empty() || shape.size() > 3)
      throw ShapeError("tensor rank must be 1..3, got " + shape_str(shape));
    for (int d : shape)
      if (d <= 0) throw ShapeError("non-positive dim in " + shape_str(shape));
    if (numel_of(shape) != static_cast<int64_t>(data.size()))
      throw ShapeError("data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    TensorT t;
    t.node_ = std::make_shared<TensorNode<S>>();
    t.node_->shape = std::move(shape);
    t.node_->value = std::move(data);
    t.node_->requires_grad = requires_grad;
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }

  // rows/cols for the rank-2 view used by most ops.
  int rows() const { return node_->shape[0]; }
  int cols() const {
    return rank() >= 2 ? node_->shape[1] : 1;
  }

  bool requires_grad() const { return node_->requires_grad; }

  std::vector<S>& values() { return node_->value; }
  const std::vector<S>& values() const { return node_->value; }
  S* data() { return node_->value.data(); }
  const S* data() const { return node_->value.data(); }

  S& at(int i) { return node_->value[static_cast<size_t>(i)]; }
  S at(int i) const { return node_->value[static_cast<size_t>(i)]; }
  S& at(int i, int j) {
    return node_->value[static_cast<size_t>(i) * cols() + j];
  }
  S at(int i, int j) const {
    return node_->value[static_cast<size_t>(i) * cols() + j];
  }

  S scalar() const {
    if (numel() != 1) throw UsageError("scalar() on tensor " + shape_str(shape()));
    return node_->value[0];
  }

  // Gradient access. grad() may be empty, meaning all-zero. A TensorT is a
  // shared handle, so gradient accumulation works through const copies held
  // by backward closures.
  const std::vector<S>& grad() const { return node_->grad; }
  std::vector<S>& grad_buffer() const {
    node_->ensure_grad();
    return node_->grad;
  }
  S grad_at(int64_t i) const {
    return node_->grad.empty() ? S(0) : node_->grad[static_cast<size_t>(i)];
  }
  void zero_grad() const {
    if (!node_->grad.empty()) node_->grad.assign(node_->value.size(), S(0));
  }

  TensorNode<S>* node() const { return node_.get(); }
  bool same_node(const TensorT& other) const { return node_ == other.node_; }

 private:
  static TensorT with_value(Shape shape, S v, bool requires_grad) {
    std::vector<S> data(static_cast<size_t>(numel_of(shape)), v);
    return from(std::move(shape), std::move(data), requires_grad);
  }

  std::shared_ptr<TensorNode<S>> node_;
};

// Reverse-mode tape. Ops append one backward closure per recorded node; the
// backward pass replays them in exact reverse order, accumulating gradients
// additively into each input's buffer. Grads of op outputs (non-leaf nodes)
// are reset at the start of every backward call, so leaf tensors accumulate
// exactly one d(loss)/d(leaf) contribution per call.
template <typename S>
class GraphT {
 public:
  explicit GraphT(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }

  void record(const TensorT<S>& out, std::function<void()> backward_fn) {
    tape_.push_back(Entry{out, std::move(backward_fn)});
  }

  void backward(const TensorT<S>& loss) {
    if (loss.numel() != 1)
      throw UsageError("backward requires a scalar loss, got " +
                       shape_str(loss.shape()));
    if (!loss.requires_grad())
      throw UsageError("backward on a tensor with no gradient path");
    for (auto& e : tape_) e.out.zero_grad();
    loss.node()->ensure_grad();
    loss.node()->grad[0] += S(1);
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) it->fn();
  }

  void clear() { tape_.clear(); }
  size_t size() const { return tape_.size(); }

 private:
  struct Entry {
    TensorT<S> out;
    std::function<void()> fn;
  };

  bool recording_;
  std::vector<Entry> tape_;
};

using Tensor = TensorT<float>;
using Graph = GraphT<float>;

}  // namespace mrnet
