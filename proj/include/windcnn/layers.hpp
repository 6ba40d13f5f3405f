#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "windcnn/model_config.hpp"
#include "windcnn/ops.hpp"
#include "windcnn/param_registry.hpp"

namespace windcnn {

/// Conv layer with Kaiming-uniform (fan-in) weights and zero bias, drawn from
/// the stream named after the parameter so values do not depend on build order.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamRegistry<T>& registry, const std::string& name, int in_channels, int out_channels,
         int kernel, Conv2dOptions options, std::uint64_t seed);

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight_, bias_, options_); }

  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  Tensor<T> weight_;
  Tensor<T> bias_;
  Conv2dOptions options_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(ParamRegistry<T>& registry, const std::string& name, int channels);

  Tensor<T> operator()(const Tensor<T>& x, Mode mode) { return batchnorm2d(x, scale_, shift_, stats_, mode); }

  Tensor<T>& scale() { return scale_; }
  Tensor<T>& shift() { return shift_; }

 private:
  Tensor<T> scale_;
  Tensor<T> shift_;
  RunningStats<T> stats_;
};

template <typename T>
class ChannelLayerNorm {
 public:
  ChannelLayerNorm() = default;
  ChannelLayerNorm(ParamRegistry<T>& registry, const std::string& name, int channels);

  Tensor<T> operator()(const Tensor<T>& x) const { return layernorm_channels(x, scale_, shift_, 1e-6); }

  Tensor<T>& scale() { return scale_; }
  Tensor<T>& shift() { return shift_; }

 private:
  Tensor<T> scale_;
  Tensor<T> shift_;
};

/// U-Net block: [3x3 conv, batchnorm, relu] x 2.
/// ConvNeXt block: optional 1x1 projection, depthwise 7x7, channel layernorm,
/// 1x1 expand x4, gelu, 1x1 contract, residual add of the (projected) input.
template <typename T>
class ComputeBlock {
 public:
  ComputeBlock(ParamRegistry<T>& registry, const std::string& name, BlockType kind, int in_channels,
               int out_channels, std::uint64_t seed);

  Tensor<T> forward(const Tensor<T>& x, Mode mode);

  BlockType kind() const { return kind_; }

 private:
  BlockType kind_;
  // unet
  Conv2d<T> conv1_, conv2_;
  BatchNorm2d<T> bn1_, bn2_;
  // convnext
  std::optional<Conv2d<T>> projection_;
  Conv2d<T> depthwise_, expand_, contract_;
  ChannelLayerNorm<T> norm_;
};

}  // namespace windcnn
