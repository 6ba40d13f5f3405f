#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "windcnn/layers.hpp"
#include "windcnn/model_config.hpp"
#include "windcnn/param_registry.hpp"
#include "windcnn/rng.hpp"

namespace windcnn {

template <typename T>
using StageOutputs = std::array<Tensor<T>, 5>;

/// Configurable height-map -> velocity-field network:
/// output_head(resmerge(decoder(encoder(stem(x))), x)).
///
/// Weights are drawn from streams keyed by (seed, parameter name); dropout
/// masks come from the model's own "dropout" stream.
template <typename T>
class Model {
 public:
  explicit Model(const ModelConfig& config, std::uint64_t seed = 0);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  std::uint64_t seed() const { return seed_; }
  ParamRegistry<T>& params() { return registry_; }
  const ParamRegistry<T>& params() const { return registry_; }
  Rng& dropout_rng() { return dropout_rng_; }
  const Rng& dropout_rng() const { return dropout_rng_; }

  /// Input (N, input_channels, H, W) with H, W divisible by 64.
  Tensor<T> forward(const Tensor<T>& input, Mode mode);

  /// 4x4/stride-4 conv, then parallel 7x7 and 1x1 branches concatenated.
  Tensor<T> stem(const Tensor<T>& input);
  /// Five pre-pool stage outputs at S, S/2, ..., S/16.
  StageOutputs<T> encode(const Tensor<T>& stem_out, Mode mode);
  Tensor<T> decode(const StageOutputs<T>& stages, Mode mode);
  /// Half-U-Net fusion: every stage upsampled to resolution S and summed.
  Tensor<T> fuse_scales(const StageOutputs<T>& stages) const;
  Tensor<T> resmerge(const Tensor<T>& decoder_out, const Tensor<T>& raw_input, Mode mode);
  Tensor<T> output_head(const Tensor<T>& features, Mode mode);

  /// Channel count leaving the decoder (and entering ResMerge / the head).
  int decoder_width() const;
  /// Number of upsample+concat skip junctions (4 for the U-Net decoder).
  int skip_junctions() const { return static_cast<int>(decoder_stages_.size()); }

  // Direct handles used by tests that zero out parts of the network.
  Conv2d<T>& resmerge_embed() { return resmerge_embed_; }
  Conv2d<T>& head_projection() { return head_projection_; }
  std::vector<ComputeBlock<T>>& resmerge_blocks() { return resmerge_blocks_; }

 private:
  Tensor<T> run_blocks(std::vector<ComputeBlock<T>>& blocks, Tensor<T> x, Mode mode);
  Tensor<T> dropout(const Tensor<T>& x, Mode mode);

  ModelConfig config_;
  std::uint64_t seed_;
  ParamRegistry<T> registry_;
  Rng dropout_rng_;

  Conv2d<T> stem_down_, stem_wide_, stem_narrow_;
  std::array<std::vector<ComputeBlock<T>>, 5> encoder_stages_;
  std::vector<std::vector<ComputeBlock<T>>> decoder_stages_;  // U-Net decoder junctions
  std::vector<ComputeBlock<T>> fusion_blocks_;                // Half-U-Net decoder
  Conv2d<T> resmerge_embed_;
  std::vector<ComputeBlock<T>> resmerge_blocks_;
  std::vector<ComputeBlock<T>> head_blocks_;
  Conv2d<T> head_projection_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace windcnn
