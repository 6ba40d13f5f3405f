#include "windcnn/tensor.hpp"

#include <cmath>
#include <unordered_set>

#include "windcnn/errors.hpp"

namespace windcnn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : node_(std::make_shared<Node>()) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative extent in shape " + shape.str());
  }
  node_->shape = shape;
  node_->data.assign(static_cast<std::size_t>(shape.numel()), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node>()) {
  if (static_cast<std::int64_t>(values.size()) != shape.numel()) {
    throw ShapeError("shape " + shape.str() + " needs " + std::to_string(shape.numel()) +
                     " values, got " + std::to_string(values.size()));
  }
  node_->shape = shape;
  node_->data = std::move(values);
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{1, 1, 1, 1}, value);
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  return node_->ensure_grad();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return node_->ensure_grad();
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T{0});
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  node_->requires_grad = on;
  return *this;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape().str());
  return node_->data[0];
}

template <typename T>
T& Tensor<T>::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
  const Shape& s = node_->shape;
  return node_->data[static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
}

template <typename T>
T Tensor<T>::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
  const Shape& s = node_->shape;
  return node_->data[static_cast<std::size_t>(((n * s.c + c) * s.h + h) * s.w + w)];
}

template <typename T>
void Tensor<T>::backward() const {
  // Iterative post-order DFS gives a topological order of the tape.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  auto& seed = node_->ensure_grad();
  std::fill(seed.begin(), seed.end(), T{1});
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
  // Release the tape; interior grads are dropped, leaf grads stay.
  for (Node* node : order) {
    if (node->backward_fn) {
      node->backward_fn = nullptr;
      node->parents.clear();
      if (node != node_.get()) {
        node->grad.clear();
        node->grad.shrink_to_fit();
      }
    }
  }
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor(node_->shape, node_->data);
}

template <typename T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<Node> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T>&& values,
                      std::initializer_list<const Tensor<T>*> parents,
                      std::function<void(detail::TensorNode<T>&)> backward) {
  auto node = std::make_shared<detail::TensorNode<T>>();
  node->shape = shape;
  node->data = std::move(values);
  if (grad_enabled()) {
    bool any = false;
    for (const Tensor<T>* p : parents) any = any || (p->defined() && p->requires_grad());
    if (any) {
      node->requires_grad = true;
      // Undefined optionals keep their slot so backward_fn can index by position.
      for (const Tensor<T>* p : parents) node->parents.push_back(p->shared_node());
      node->backward_fn = std::move(backward);
    }
  }
  return Tensor<T>::from_node(std::move(node));
}

template <typename T>
bool all_finite(std::span<const T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_result(Shape, std::vector<float>&&,
                                   std::initializer_list<const Tensor<float>*>,
                                   std::function<void(detail::TensorNode<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>&&,
                                    std::initializer_list<const Tensor<double>*>,
                                    std::function<void(detail::TensorNode<double>&)>);
template bool all_finite(std::span<const float>);
template bool all_finite(std::span<const double>);

}  // namespace windcnn
