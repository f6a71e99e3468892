#pragma once

// Dense row-major arrays with a reverse-mode gradient tape.
//
// A Tensor is a shared handle to a node. Nodes produced by differentiable ops
// keep their parents alive and carry a closure that pushes the node's
// gradient back into the parents. Calling backward() on a scalar walks the
// graph in reverse topological order. Leaves that require gradients (model
// parameters) accumulate into their grad buffer across calls.

#include <cstddef>
#include <functional>
#include <new>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace a2j {

using Shape = std::vector<std::size_t>;

// Tensor storage starts on a 64-byte boundary. Vectorised kernels peel
// differently depending on the alignment of their first element, so fixed
// alignment keeps results independent of heap layout.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws ShapeError naming `what` and both shapes when they differ.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

template <typename T>
struct TensorNode {
  Shape shape;
  Buffer<T> value;
  Buffer<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backward;

  // Allocates a zeroed gradient buffer on first use.
  Buffer<T>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

// Recording is enabled by default; NoGradGuard disables it for the current
// thread, which turns every op into a plain forward evaluation.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using Node = TensorNode<T>;

  Tensor() = default;
  Tensor(Shape shape, Buffer<T> values, bool requires_grad = false);
  template <typename Alloc>
  Tensor(Shape shape, const std::vector<T, Alloc>& values, bool requires_grad = false)
      : Tensor(std::move(shape), Buffer<T>(values.begin(), values.end()), requires_grad) {}
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const T> values() const { return node_->value; }
  std::span<T> mutable_values() { return node_->value; }
  const T* data() const { return node_->value.data(); }
  T operator[](std::size_t i) const { return node_->value[i]; }

  // Empty span when no gradient has been accumulated yet.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  bool requires_grad() const { return node_->requires_grad; }
  T item() const;

  // Seeds d(this)/d(this) = 1 and propagates through the recorded graph.
  void backward() const;

  // Copy of the values with no graph attached.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

// Builds an op result. When recording is on and any input requires a
// gradient the result is marked and linked to its inputs; the caller then
// attaches the backward closure with set_backward().
template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> value,
                      std::initializer_list<const Tensor<T>*> inputs);

template <typename T>
void set_backward(Tensor<T>& out, std::function<void()> fn) {
  if (out.requires_grad()) out.node()->backward = std::move(fn);
}

// True when the node wants a gradient; allocates its buffer.
template <typename T>
bool wants_grad(TensorNode<T>* n) {
  if (!n->requires_grad) return false;
  n->ensure_grad();
  return true;
}

}  // namespace detail

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace a2j
