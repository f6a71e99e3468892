#include "a2j/tensor.hpp"

#include <numeric>
#include <sstream>
#include <unordered_set>

namespace a2j {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a) +
                     " vs " + shape_str(b));
  }
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, Buffer<T> values, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  if (numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " holds " +
                     std::to_string(numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), Buffer<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return Tensor(Shape{1}, Buffer<T>{value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(node_->shape));
  }
  return node_->shape[axis];
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
  if (node_->value.size() != 1) {
    throw ShapeError("item: expected a single value, shape " + shape_str(node_->shape));
  }
  return node_->value[0];
}

template <typename T>
void Tensor<T>::backward() const {
  if (node_->value.size() != 1) {
    throw ShapeError("backward: root must be scalar, shape " + shape_str(node_->shape));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS; `order` ends up topologically sorted with the
  // root last.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward();
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(node_->shape, node_->value, false);
}

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> value,
                      std::initializer_list<const Tensor<T>*> inputs) {
  Tensor<T> out(std::move(shape), std::move(value));
  if (!grad_enabled()) return out;
  for (const Tensor<T>* in : inputs) {
    if (in && in->defined() && in->requires_grad()) {
      out.node()->requires_grad = true;
      break;
    }
  }
  // Every input is retained, not only differentiable ones: backward closures
  // read input values (e.g. x when forming dW).
  if (out.requires_grad()) {
    for (const Tensor<T>* in : inputs) {
      if (in && in->defined()) out.node()->parents.push_back(in->node());
    }
  }
  return out;
}

template Tensor<float> make_result(Shape, Buffer<float>,
                                   std::initializer_list<const Tensor<float>*>);
template Tensor<double> make_result(Shape, Buffer<double>,
                                    std::initializer_list<const Tensor<double>*>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;

}  // namespace a2j
