#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "windcnn/errors.hpp"
#include "windcnn/tensor.hpp"

namespace windcnn {

template <typename T>
struct ParamEntry {
  std::string name;
  Tensor<T> tensor;
  bool decay = true;  // weight-decay eligible
};

template <typename T>
struct BufferEntry {
  std::string name;
  Tensor<T> tensor;
};

/// Ordered, uniquely named trainable parameters plus non-trainable buffers
/// (normalization running statistics). Order is registration order.
template <typename T>
class ParamRegistry {
 public:
  Tensor<T> add(std::string name, Tensor<T> tensor, bool decay) {
    claim(name);
    tensor.set_requires_grad(true);
    params_.push_back({std::move(name), tensor, decay});
    return tensor;
  }

  Tensor<T> add_buffer(std::string name, Tensor<T> tensor) {
    claim(name);
    buffers_.push_back({std::move(name), tensor});
    return tensor;
  }

  const std::vector<ParamEntry<T>>& params() const { return params_; }
  const std::vector<BufferEntry<T>>& buffers() const { return buffers_; }

  /// Total scalar count over trainable parameters.
  std::int64_t total_elements() const {
    std::int64_t total = 0;
    for (const auto& p : params_) total += p.tensor.numel();
    return total;
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

 private:
  void claim(const std::string& name) {
    if (!names_.insert(name).second) throw ConfigError("duplicate parameter name '" + name + "'");
  }

  std::vector<ParamEntry<T>> params_;
  std::vector<BufferEntry<T>> buffers_;
  std::unordered_set<std::string> names_;
};

}  // namespace windcnn
