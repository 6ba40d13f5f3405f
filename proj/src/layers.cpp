#include "windcnn/layers.hpp"

#include <cmath>

namespace windcnn {

template <typename T>
Conv2d<T>::Conv2d(ParamRegistry<T>& registry, const std::string& name, int in_channels,
                  int out_channels, int kernel, Conv2dOptions options, std::uint64_t seed)
    : options_(options) {
  const int per_group = in_channels / options.groups;
  Tensor<T> w(Shape{out_channels, per_group, kernel, kernel});
  const double fan_in = static_cast<double>(per_group) * kernel * kernel;
  // Kaiming-uniform with negative slope sqrt(5): gain sqrt(1/3), bound 1/sqrt(fan_in).
  const double bound = 1.0 / std::sqrt(fan_in);
  Rng rng(seed, name + ".weight");
  for (T& v : w.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  weight_ = registry.add(name + ".weight", w, true);
  bias_ = registry.add(name + ".bias", Tensor<T>(Shape{1, out_channels, 1, 1}), false);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(ParamRegistry<T>& registry, const std::string& name, int channels)
    : stats_(RunningStats<T>::make(channels)) {
  scale_ = registry.add(name + ".scale", Tensor<T>(Shape{1, channels, 1, 1}, T{1}), false);
  shift_ = registry.add(name + ".shift", Tensor<T>(Shape{1, channels, 1, 1}, T{0}), false);
  registry.add_buffer(name + ".running_mean", stats_.mean);
  registry.add_buffer(name + ".running_var", stats_.var);
}

template <typename T>
ChannelLayerNorm<T>::ChannelLayerNorm(ParamRegistry<T>& registry, const std::string& name, int channels) {
  scale_ = registry.add(name + ".scale", Tensor<T>(Shape{1, channels, 1, 1}, T{1}), false);
  shift_ = registry.add(name + ".shift", Tensor<T>(Shape{1, channels, 1, 1}, T{0}), false);
}

template <typename T>
ComputeBlock<T>::ComputeBlock(ParamRegistry<T>& registry, const std::string& name, BlockType kind,
                              int in_channels, int out_channels, std::uint64_t seed)
    : kind_(kind) {
  const int n = out_channels;
  if (kind == BlockType::unet) {
    conv1_ = Conv2d<T>(registry, name + ".conv1", in_channels, n, 3, {1, 1, 1}, seed);
    bn1_ = BatchNorm2d<T>(registry, name + ".bn1", n);
    conv2_ = Conv2d<T>(registry, name + ".conv2", n, n, 3, {1, 1, 1}, seed);
    bn2_ = BatchNorm2d<T>(registry, name + ".bn2", n);
    return;
  }
  if (in_channels != n) projection_ = Conv2d<T>(registry, name + ".proj", in_channels, n, 1, {}, seed);
  depthwise_ = Conv2d<T>(registry, name + ".dwconv", n, n, 7, {1, 3, n}, seed);
  norm_ = ChannelLayerNorm<T>(registry, name + ".norm", n);
  expand_ = Conv2d<T>(registry, name + ".pwconv1", n, 4 * n, 1, {}, seed);
  contract_ = Conv2d<T>(registry, name + ".pwconv2", 4 * n, n, 1, {}, seed);
}

template <typename T>
Tensor<T> ComputeBlock<T>::forward(const Tensor<T>& x, Mode mode) {
  if (kind_ == BlockType::unet) {
    Tensor<T> y = activation(bn1_(conv1_(x), mode), Activation::relu);
    return activation(bn2_(conv2_(y), mode), Activation::relu);
  }
  const Tensor<T> residual = projection_ ? (*projection_)(x) : x;
  Tensor<T> y = norm_(depthwise_(residual));
  y = contract_(activation(expand_(y), Activation::gelu));
  return add(residual, y);
}

template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class ChannelLayerNorm<float>;
template class ChannelLayerNorm<double>;
template class ComputeBlock<float>;
template class ComputeBlock<double>;

}  // namespace windcnn
