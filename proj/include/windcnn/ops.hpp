#pragma once

#include "windcnn/rng.hpp"
#include "windcnn/tensor.hpp"

namespace windcnn {

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

/// Zero-padded 2-D cross-correlation. weight is (Cout, Cin/groups, k, k);
/// bias is (1, Cout, 1, 1) or undefined. Issues MacCounter::record.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv2dOptions options = {});

/// 2x2 window, stride 2. Ties resolve to the first element in row-major order.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input);

template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& input, int factor);

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& input, int factor);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

/// Channels [begin, end) of x.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t end);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Sum of all elements as a (1,1,1,1) tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

/// Sum of x * weights (weights fixed, same element count as x).
template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& x, const std::vector<T>& weights);

/// Normalizes over the channel axis at every (n, h, w); scale/shift are (1,C,1,1).
template <typename T>
Tensor<T> layernorm_channels(const Tensor<T>& input, const Tensor<T>& scale,
                             const Tensor<T>& shift, double eps = 1e-6);

template <typename T>
struct RunningStats {
  Tensor<T> mean;  // (1,C,1,1), starts at 0
  Tensor<T> var;   // (1,C,1,1), starts at 1

  static RunningStats make(std::int64_t channels);
};

/// Per-channel normalization. Train mode uses batch statistics and updates
/// `stats` (unbiased variance, exponential factor `momentum`); eval mode uses
/// `stats` as is.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& scale, const Tensor<T>& shift,
                      RunningStats<T>& stats, Mode mode, double eps = 1e-5,
                      double momentum = 0.1);

enum class Activation { relu, gelu };

template <typename T>
Tensor<T> activation(const Tensor<T>& input, Activation kind);

/// Zeroes whole (n, c) planes with probability `rate` in train mode and
/// scales survivors by 1/(1-rate). Identity in eval mode or at rate 0.
template <typename T>
Tensor<T> dropout2d(const Tensor<T>& input, double rate, Mode mode, Rng& rng);

}  // namespace windcnn
