#include "windcnn/model.hpp"

#include <numeric>

#include "windcnn/errors.hpp"

namespace windcnn {

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed)
    : config_(config), seed_(seed), dropout_rng_(seed, "dropout") {
  validate(config_);
  const ModelConfig& c = config_;
  const int cin = c.input_channels;
  const BlockType kind = c.block_type;

  stem_down_ = Conv2d<T>(registry_, "stem.down", cin, cin, 4, {4, 0, 1}, seed);
  stem_wide_ = Conv2d<T>(registry_, "stem.wide", cin, cin, 7, {1, 3, 1}, seed);
  stem_narrow_ = Conv2d<T>(registry_, "stem.narrow", cin, c.encoder_channels[0] - cin, 1, {}, seed);

  int width = c.encoder_channels[0];
  for (std::size_t s = 0; s < 5; ++s) {
    for (int b = 0; b < c.encoder_blocks[s]; ++b) {
      const std::string name = "encoder." + std::to_string(s) + ".block" + std::to_string(b);
      encoder_stages_[s].emplace_back(registry_, name, kind, width, c.encoder_channels[s], seed);
      width = c.encoder_channels[s];
    }
  }

  if (c.decoder_type == DecoderType::unet) {
    width = c.decoder_channels[0];
    for (std::size_t j = 0; j < 4; ++j) {
      std::vector<ComputeBlock<T>> stage;
      int in = width + c.encoder_channels[3 - j];
      for (int b = 0; b < c.decoder_blocks[j]; ++b) {
        const std::string name = "decoder." + std::to_string(j) + ".block" + std::to_string(b);
        stage.emplace_back(registry_, name, kind, in, c.decoder_channels[j + 1], seed);
        in = c.decoder_channels[j + 1];
      }
      decoder_stages_.push_back(std::move(stage));
      width = c.decoder_channels[j + 1];
    }
  } else {
    width = c.decoder_channels[0];
    const int total = std::accumulate(c.decoder_blocks.begin(), c.decoder_blocks.end(), 0);
    for (int b = 0; b < total; ++b) {
      fusion_blocks_.emplace_back(registry_, "decoder.fusion.block" + std::to_string(b), kind, width,
                                  width, seed);
    }
  }

  resmerge_embed_ = Conv2d<T>(registry_, "resmerge.embed", cin, width, 3, {1, 1, 1}, seed);
  for (int b = 0; b < c.resmerge_blocks; ++b) {
    resmerge_blocks_.emplace_back(registry_, "resmerge.block" + std::to_string(b), kind, width, width, seed);
  }
  for (int b = 0; b < c.output_blocks; ++b) {
    head_blocks_.emplace_back(registry_, "head.block" + std::to_string(b), kind, width, width, seed);
  }
  head_projection_ = Conv2d<T>(registry_, "head.proj", width, c.output_channels, 1, {}, seed);
}

template <typename T>
int Model<T>::decoder_width() const {
  return config_.decoder_type == DecoderType::unet ? config_.decoder_channels[4] : config_.decoder_channels[0];
}

template <typename T>
Tensor<T> Model<T>::run_blocks(std::vector<ComputeBlock<T>>& blocks, Tensor<T> x, Mode mode) {
  for (auto& block : blocks) x = block.forward(x, mode);
  return x;
}

template <typename T>
Tensor<T> Model<T>::dropout(const Tensor<T>& x, Mode mode) {
  return dropout2d(x, config_.dropout, mode, dropout_rng_);
}

template <typename T>
Tensor<T> Model<T>::stem(const Tensor<T>& input) {
  const Shape s = input.shape();
  if (s.c != config_.input_channels) {
    throw ShapeError("stem: input channel dimension C=" + std::to_string(s.c) + " but config expects " +
                     std::to_string(config_.input_channels));
  }
  if (s.h % 4 != 0) throw ShapeError("stem: height H=" + std::to_string(s.h) + " not divisible by 4");
  if (s.w % 4 != 0) throw ShapeError("stem: width W=" + std::to_string(s.w) + " not divisible by 4");
  const Tensor<T> down = stem_down_(input);
  return concat_channels(stem_wide_(down), stem_narrow_(down));
}

template <typename T>
StageOutputs<T> Model<T>::encode(const Tensor<T>& stem_out, Mode mode) {
  const Shape s = stem_out.shape();
  if (s.h % 16 != 0 || s.w % 16 != 0) {
    throw ShapeError("encoder: resolution underflow, stem output " + s.str() +
                     " cannot be halved four times");
  }
  StageOutputs<T> stages;
  Tensor<T> x = stem_out;
  for (std::size_t i = 0; i < 5; ++i) {
    if (i > 0) x = maxpool2d(stages[i - 1]);
    x = dropout(run_blocks(encoder_stages_[i], x, mode), mode);
    stages[i] = x;
  }
  return stages;
}

template <typename T>
Tensor<T> Model<T>::decode(const StageOutputs<T>& stages, Mode mode) {
  for (std::size_t i = 0; i < 5; ++i) {
    const int expected = config_.encoder_channels[i];
    if (stages[i].shape().c != expected) {
      throw ShapeError("decoder: stage " + std::to_string(i) + " has channel dimension C=" +
                       std::to_string(stages[i].shape().c) + ", expected " + std::to_string(expected));
    }
  }
  if (config_.decoder_type == DecoderType::unet) {
    Tensor<T> x = stages[4];
    for (std::size_t j = 0; j < 4; ++j) {
      const Tensor<T>& skip = stages[3 - j];
      x = upsample_nearest(x, 2);
      if (x.shape().h != skip.shape().h || x.shape().w != skip.shape().w) {
        throw ShapeError("decoder: upsampled " + x.shape().str() + " does not match skip " + skip.shape().str());
      }
      x = dropout(run_blocks(decoder_stages_[j], concat_channels(x, skip), mode), mode);
    }
    return x;
  }
  return dropout(run_blocks(fusion_blocks_, fuse_scales(stages), mode), mode);
}

template <typename T>
Tensor<T> Model<T>::fuse_scales(const StageOutputs<T>& stages) const {
  Tensor<T> fused = stages[0];
  for (std::size_t i = 1; i < 5; ++i) fused = add(fused, upsample_nearest(stages[i], 1 << i));
  return fused;
}

template <typename T>
Tensor<T> Model<T>::resmerge(const Tensor<T>& decoder_out, const Tensor<T>& raw_input, Mode mode) {
  const Tensor<T> up = upsample_nearest(decoder_out, 4);
  if (up.shape().h != raw_input.shape().h || up.shape().w != raw_input.shape().w) {
    throw ShapeError("resmerge: upsampled decoder output " + up.shape().str() +
                     " does not match input resolution " + raw_input.shape().str());
  }
  const Tensor<T> merged = add(up, resmerge_embed_(raw_input));
  return add(merged, run_blocks(resmerge_blocks_, merged, mode));
}

template <typename T>
Tensor<T> Model<T>::output_head(const Tensor<T>& features, Mode mode) {
  return head_projection_(run_blocks(head_blocks_, features, mode));
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& input, Mode mode) {
  const Shape s = input.shape();
  if (s.h % 64 != 0 || s.w % 64 != 0) {
    throw ShapeError("model: input extent " + s.str() + " must have H and W divisible by 64");
  }
  const Tensor<T> features = stem(input);
  const Tensor<T> decoded = decode(encode(features, mode), mode);
  return output_head(resmerge(decoded, input, mode), mode);
}

template class Model<float>;
template class Model<double>;

}  // namespace windcnn
