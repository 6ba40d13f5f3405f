#pragma once

#include <cstdint>

#include "windcnn/model.hpp"
#include "windcnn/model_config.hpp"

namespace windcnn {

/// Trainable parameter count from per-layer formulas, without building the model.
std::int64_t count_params(const ModelConfig& config);

/// Multiply-accumulates of one batch-1 forward pass at H x W (both divisible
/// by 64), from per-layer formulas. Norms, activations, pooling and
/// upsampling contribute nothing; bias adds are not counted.
std::int64_t count_macs(const ModelConfig& config, std::int64_t height, std::int64_t width);

/// Brute-force enumeration of a built model's registry.
template <typename T>
std::int64_t enumerate_params(const Model<T>& model) {
  return model.params().total_elements();
}

/// Runs an eval-mode batch-1 forward under a MacCounter and returns the tally.
template <typename T>
std::int64_t instrumented_macs(Model<T>& model, std::int64_t height, std::int64_t width);

}  // namespace windcnn
