#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace windcnn {

/// Extents of a dense NCHW tensor. W is the fastest-varying axis.
struct Shape {
  std::int64_t n = 0;
  std::int64_t c = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;

  constexpr std::int64_t numel() const { return n * c * h * w; }
  constexpr std::int64_t plane() const { return h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
  std::string str() const;
};

enum class Mode { train, eval };

/// Graph recording is on by default; inference paths switch it off with NoGradGuard.
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

namespace detail {

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  // Recorded by ops when graph building is on. backward_fn reads this node's
  // grad and accumulates into parents that require grad.
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T{0});
    return grad;
  }
};

}  // namespace detail

/// Shared handle to a dense 4-D array with optional gradient.
///
/// Copies alias the same storage; use clone() for a deep copy. Ops build a
/// tape through the `parents` links of their results, and backward() walks
/// that tape in reverse topological order, releasing it afterwards.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Node = detail::TensorNode<T>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> values);
  static Tensor scalar(T value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t numel() const { return node_->shape.numel(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T* ptr() { return node_->data.data(); }
  const T* ptr() const { return node_->data.data(); }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::span<T> grad();
  std::span<const T> grad() const;
  void zero_grad();

  bool requires_grad() const { return node_ && node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);

  T item() const;
  T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w);
  T at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;

  /// Seeds this tensor's gradient with ones and back-propagates.
  void backward() const;

  /// Deep copy of values; the copy is a leaf with no gradient.
  Tensor clone() const;

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared_node() const { return node_; }
  static Tensor from_node(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

/// Result factory for ops. When graph recording is on and any parent requires
/// grad, the result records `parents` and `backward`.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T>&& values,
                      std::initializer_list<const Tensor<T>*> parents,
                      std::function<void(detail::TensorNode<T>&)> backward);

template <typename T>
bool all_finite(std::span<const T> values);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace windcnn
