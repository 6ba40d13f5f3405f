#include "windcnn/counting.hpp"

#include <numeric>

#include "windcnn/errors.hpp"
#include "windcnn/mac_counter.hpp"

namespace windcnn {

namespace {

struct Tally {
  std::int64_t params = 0;
  std::int64_t macs = 0;

  void conv(std::int64_t cin, std::int64_t cout, std::int64_t k, std::int64_t groups,
            std::int64_t positions) {
    const std::int64_t weights = k * k * (cin / groups) * cout;
    params += weights + cout;
    macs += weights * positions;
  }

  void norm(std::int64_t channels) { params += 2 * channels; }

  void block(BlockType kind, std::int64_t cin, std::int64_t n, std::int64_t positions) {
    if (kind == BlockType::unet) {
      conv(cin, n, 3, 1, positions);
      norm(n);
      conv(n, n, 3, 1, positions);
      norm(n);
      return;
    }
    if (cin != n) conv(cin, n, 1, 1, positions);
    conv(n, n, 7, n, positions);
    norm(n);
    conv(n, 4 * n, 1, 1, positions);
    conv(4 * n, n, 1, 1, positions);
  }

  void blocks(BlockType kind, int count, std::int64_t cin, std::int64_t n, std::int64_t positions) {
    for (int b = 0; b < count; ++b) {
      block(kind, b == 0 ? cin : n, n, positions);
    }
  }
};

Tally tally(const ModelConfig& c, std::int64_t h, std::int64_t w) {
  validate(c);
  Tally t;
  const std::int64_t cin = c.input_channels;
  const BlockType kind = c.block_type;
  const std::int64_t sh = h / 4;
  const std::int64_t sw = w / 4;
  auto at = [&](int level) { return (sh >> level) * (sw >> level); };

  t.conv(cin, cin, 4, 1, at(0));
  t.conv(cin, cin, 7, 1, at(0));
  t.conv(cin, c.encoder_channels[0] - cin, 1, 1, at(0));

  std::int64_t width = c.encoder_channels[0];
  for (int s = 0; s < 5; ++s) {
    t.blocks(kind, c.encoder_blocks[s], width, c.encoder_channels[s], at(s));
    width = c.encoder_channels[s];
  }

  if (c.decoder_type == DecoderType::unet) {
    width = c.decoder_channels[0];
    for (int j = 0; j < 4; ++j) {
      const std::int64_t in = width + c.encoder_channels[3 - j];
      t.blocks(kind, c.decoder_blocks[j], in, c.decoder_channels[j + 1], at(3 - j));
      width = c.decoder_channels[j + 1];
    }
  } else {
    width = c.decoder_channels[0];
    const int total = std::accumulate(c.decoder_blocks.begin(), c.decoder_blocks.end(), 0);
    t.blocks(kind, total, width, width, at(0));
  }

  const std::int64_t full = h * w;
  t.conv(cin, width, 3, 1, full);
  t.blocks(kind, c.resmerge_blocks, width, width, full);
  t.blocks(kind, c.output_blocks, width, width, full);
  t.conv(width, c.output_channels, 1, 1, full);
  return t;
}

}  // namespace

std::int64_t count_params(const ModelConfig& config) { return tally(config, 64, 64).params; }

std::int64_t count_macs(const ModelConfig& config, std::int64_t height, std::int64_t width) {
  if (height <= 0 || width <= 0 || height % 64 != 0 || width % 64 != 0) {
    throw ShapeError("count_macs: H and W must be positive multiples of 64, got " + std::to_string(height) +
                     "x" + std::to_string(width));
  }
  return tally(config, height, width).macs;
}

template <typename T>
std::int64_t instrumented_macs(Model<T>& model, std::int64_t height, std::int64_t width) {
  NoGradGuard no_grad;
  MacCounter counter;
  const Tensor<T> input(Shape{1, model.config().input_channels, height, width}, T{0});
  model.forward(input, Mode::eval);
  return counter.count();
}

template std::int64_t instrumented_macs(Model<float>&, std::int64_t, std::int64_t);
template std::int64_t instrumented_macs(Model<double>&, std::int64_t, std::int64_t);

}  // namespace windcnn
