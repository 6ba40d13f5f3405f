#include <doctest.h>

#include <cmath>

#include "test_helpers.hpp"
#include "windcnn/counting.hpp"
#include "windcnn/errors.hpp"
#include "windcnn/grad_check.hpp"
#include "windcnn/mac_counter.hpp"
#include "windcnn/model.hpp"

using namespace windcnn;
using windcnn::testing::random_tensor;

namespace {

ModelConfig tiny_config(Architecture arch, int width = 4) {
  ModelConfig c;
  c.block_type = block_type_of(arch);
  c.decoder_type = decoder_type_of(arch);
  if (c.decoder_type == DecoderType::unet) {
    c.encoder_channels = {width, width + 2, width + 4, width + 6, width + 8};
    c.decoder_channels = reversed(c.encoder_channels);
  } else {
    c.encoder_channels = {width, width, width, width, width};
    c.decoder_channels = c.encoder_channels;
  }
  c.dropout = 0.0;
  return c;
}

ModelConfig random_config(Architecture arch, Rng& rng, int max_width) {
  ModelConfig c;
  c.block_type = block_type_of(arch);
  c.decoder_type = decoder_type_of(arch);
  if (c.decoder_type == DecoderType::unet) {
    for (int& ch : c.encoder_channels) ch = static_cast<int>(rng.uniform_int(2, max_width));
    c.decoder_channels = reversed(c.encoder_channels);
  } else {
    const int w = static_cast<int>(rng.uniform_int(2, max_width));
    c.encoder_channels = {w, w, w, w, w};
    c.decoder_channels = c.encoder_channels;
  }
  for (int& b : c.encoder_blocks) b = static_cast<int>(rng.uniform_int(1, 2));
  for (int& b : c.decoder_blocks) b = static_cast<int>(rng.uniform_int(1, 2));
  c.output_blocks = static_cast<int>(rng.uniform_int(1, 2));
  c.resmerge_blocks = static_cast<int>(rng.uniform_int(1, 2));
  return c;
}

constexpr Architecture kArchitectures[] = {Architecture::half_u_next, Architecture::half_u_net,
                                           Architecture::u_next, Architecture::u_net};

template <typename T>
bool same_values(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

template <typename T>
bool all_zero(const Tensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](T v) { return v == T(0); });
}

template <typename T>
void zero_all(ParamRegistry<T>& reg, const std::string& prefix) {
  for (auto& p : reg.params()) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    Tensor<T> handle = p.tensor;
    std::fill(handle.data().begin(), handle.data().end(), T(0));
  }
}

}  // namespace

TEST_SUITE("stem") {
  TEST_CASE("branch split adds up to the first encoder width") {
    ModelConfig c = tiny_config(Architecture::half_u_next, 32);
    Model<float> model(c, 1);
    std::int64_t wide = 0;
    std::int64_t narrow = 0;
    for (const auto& p : model.params().params()) {
      if (p.name == "stem.wide.weight") wide = p.tensor.shape().n;
      if (p.name == "stem.narrow.weight") narrow = p.tensor.shape().n;
    }
    CHECK(wide == 1);
    CHECK(narrow == 31);
    CHECK(wide + narrow == 32);
    CHECK(model.stem(Tensor<float>({1, 1, 128, 128})).shape() == Shape{1, 32, 32, 32});
  }

  TEST_CASE("1024 input down-scales to 256") {
    Model<float> model(tiny_config(Architecture::half_u_next, 8), 1);
    CHECK(model.stem(Tensor<float>({1, 1, 1024, 1024})).shape() == Shape{1, 8, 256, 256});
  }

  TEST_CASE("extents not divisible by 4 are rejected") {
    Model<float> model(tiny_config(Architecture::half_u_next), 1);
    CHECK_THROWS_AS(model.stem(Tensor<float>({1, 1, 66, 64})), ShapeError);
    CHECK_THROWS_AS(model.stem(Tensor<float>({1, 2, 64, 64})), ShapeError);
  }
}

TEST_SUITE("compute blocks") {
  TEST_CASE("U-Net block with 4 -> 8 channels has 912 parameters") {
    ParamRegistry<double> reg;
    ComputeBlock<double> block(reg, "b", BlockType::unet, 4, 8, 0);
    // conv1 9*4*8+8 = 296, bn1 16, conv2 9*8*8+8 = 584, bn2 16
    CHECK(reg.total_elements() == 912);
    CHECK(block.forward(Tensor<double>({2, 4, 8, 8}), Mode::train).shape() == Shape{2, 8, 8, 8});
  }

  TEST_CASE("ConvNeXt block parameter layout") {
    ParamRegistry<double> reg;
    ComputeBlock<double> block(reg, "b", BlockType::convnext, 4, 8, 0);
    // proj 4*8+8, dw 49*8+8, norm 16, pw1 8*32+32, pw2 32*8+8
    CHECK(reg.total_elements() == 40 + 400 + 16 + 288 + 264);
    ParamRegistry<double> same;
    ComputeBlock<double> no_proj(same, "b", BlockType::convnext, 8, 8, 0);
    CHECK(same.total_elements() == 400 + 16 + 288 + 264);
  }

  TEST_CASE("ConvNeXt block with zeroed transform is the identity") {
    ParamRegistry<double> reg;
    ComputeBlock<double> block(reg, "b", BlockType::convnext, 4, 4, 3);
    zero_all(reg, "b");
    const auto x = random_tensor<double>({1, 4, 8, 8}, 5);
    CHECK(same_values(block.forward(x, Mode::train), x));
  }

  TEST_CASE("ConvNeXt block passes the gradient check") {
    ParamRegistry<double> reg;
    ComputeBlock<double> block(reg, "b", BlockType::convnext, 4, 6, 7);
    auto x = random_tensor<double>({1, 4, 8, 8}, 8);
    std::vector<Tensor<double>> inputs{x};
    for (auto& p : reg.params()) inputs.push_back(p.tensor);
    const auto r = grad_check([&] { return block.forward(x, Mode::train); }, inputs, {1e-5, 24, 1});
    CHECK(r.passed(1e-4));
  }

  TEST_CASE("U-Net block passes the gradient check") {
    ParamRegistry<double> reg;
    ComputeBlock<double> block(reg, "b", BlockType::unet, 3, 5, 9);
    auto x = random_tensor<double>({2, 3, 6, 6}, 10);
    std::vector<Tensor<double>> inputs{x};
    for (auto& p : reg.params()) inputs.push_back(p.tensor);
    const auto r = grad_check([&] { return block.forward(x, Mode::train); }, inputs, {1e-5, 24, 2});
    CHECK(r.passed(1e-4));
  }
}

TEST_SUITE("encoder and decoders") {
  TEST_CASE("encoder stage resolutions and widths") {
    ModelConfig c = tiny_config(Architecture::u_net, 4);
    Model<float> model(c, 1);
    const auto stages = model.encode(Tensor<float>({1, 4, 32, 32}), Mode::eval);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(stages[i].shape() == Shape{1, c.encoder_channels[i], 32 >> i, 32 >> i});
    }
    CHECK_THROWS_AS(model.encode(Tensor<float>({1, 4, 24, 24}), Mode::eval), ShapeError);
  }

  TEST_CASE("U-Net decoder has four junctions and ends at the last decoder width") {
    ModelConfig c = tiny_config(Architecture::u_next, 4);
    Model<float> model(c, 1);
    CHECK(model.skip_junctions() == 4);
    const auto stages = model.encode(model.stem(Tensor<float>({1, 1, 128, 128})), Mode::eval);
    const auto out = model.decode(stages, Mode::eval);
    CHECK(out.shape() == Shape{1, c.decoder_channels[4], 32, 32});
    CHECK(model.decoder_width() == 4);
  }

  TEST_CASE("Half-U-Net fusion is a plain sum of upsampled stages") {
    Model<double> model(tiny_config(Architecture::half_u_net, 4), 1);
    CHECK(model.skip_junctions() == 0);
    StageOutputs<double> stages;
    stages[0] = random_tensor<double>({1, 4, 16, 16}, 11);
    for (std::size_t i = 1; i < 5; ++i) stages[i] = Tensor<double>({1, 4, 16 >> i, 16 >> i});
    CHECK(same_values(model.fuse_scales(stages), stages[0]));

    stages[2] = random_tensor<double>({1, 4, 4, 4}, 12);
    const auto fused = model.fuse_scales(stages);
    for (std::int64_t c = 0; c < 4; ++c)
      for (std::int64_t y = 0; y < 16; ++y)
        for (std::int64_t x = 0; x < 16; ++x)
          CHECK(fused.at(0, c, y, x) == stages[0].at(0, c, y, x) + stages[2].at(0, c, y / 4, x / 4));
  }

  TEST_CASE("Half-U-Net decoder runs the summed block count") {
    ModelConfig c = tiny_config(Architecture::half_u_next, 4);
    c.decoder_blocks = {1, 2, 1, 1, 3};
    Model<float> model(c, 1);
    int fusion = 0;
    for (const auto& p : model.params().params())
      if (p.name.rfind("decoder.fusion.block", 0) == 0 && p.name.find(".dwconv.weight") != std::string::npos) ++fusion;
    CHECK(fusion == 8);
  }

  TEST_CASE("decoder rejects mismatched stages") {
    Model<float> model(tiny_config(Architecture::u_net, 4), 1);
    StageOutputs<float> stages;
    for (std::size_t i = 0; i < 5; ++i) stages[i] = Tensor<float>({1, 3, 16 >> i, 16 >> i});
    CHECK_THROWS_AS(model.decode(stages, Mode::eval), ShapeError);
  }
}

TEST_SUITE("resmerge and head") {
  TEST_CASE("zeroed embed and U-Net blocks leave the upsampled decoder output") {
    ModelConfig c = tiny_config(Architecture::u_net, 4);
    Model<double> model(c, 2);
    zero_all(model.params(), "resmerge.");
    const auto dec = random_tensor<double>({1, 4, 16, 16}, 13);
    const auto out = model.resmerge(dec, random_tensor<double>({1, 1, 64, 64}, 14), Mode::eval);
    CHECK(same_values(out, upsample_nearest(dec, 4)));
  }

  TEST_CASE("zeroed ConvNeXt stack is a residual identity, doubling the merge") {
    ModelConfig c = tiny_config(Architecture::half_u_next, 4);
    Model<double> model(c, 2);
    zero_all(model.params(), "resmerge.");
    const auto dec = random_tensor<double>({1, 4, 16, 16}, 13);
    const auto out = model.resmerge(dec, random_tensor<double>({1, 1, 64, 64}, 14), Mode::eval);
    const auto up = upsample_nearest(dec, 4);
    for (std::size_t i = 0; i < up.data().size(); ++i) CHECK(out.data()[i] == 2.0 * up.data()[i]);
  }

  TEST_CASE("resmerge builds the configured number of blocks and rejects bad resolution") {
    for (int n : {1, 2, 4}) {
      ModelConfig c = tiny_config(Architecture::u_next, 4);
      c.resmerge_blocks = n;
      Model<float> model(c, 1);
      CHECK(static_cast<int>(model.resmerge_blocks().size()) == n);
      CHECK_THROWS_AS(model.resmerge(Tensor<float>({1, 4, 16, 16}), Tensor<float>({1, 1, 32, 32}), Mode::eval),
                      ShapeError);
    }
  }

  TEST_CASE("zeroed final projection predicts zero") {
    Model<float> model(tiny_config(Architecture::half_u_net, 4), 3);
    auto& proj = model.head_projection();
    std::fill(proj.weight().data().begin(), proj.weight().data().end(), 0.0f);
    std::fill(proj.bias().data().begin(), proj.bias().data().end(), 0.0f);
    CHECK(all_zero(model.forward(random_tensor<float>({1, 1, 64, 64}, 15), Mode::eval)));
  }
}

TEST_SUITE("full model") {
  TEST_CASE("forward shape contract for each architecture") {
    for (Architecture arch : kArchitectures) {
      CAPTURE(architecture_name(arch));
      for (int out_blocks : {1, 2}) {
        ModelConfig c = tiny_config(arch, 4);
        c.output_blocks = out_blocks;
        c.dropout = 0.1;
        Model<float> model(c, 4);
        const auto y = model.forward(random_tensor<float>({1, 1, 128, 128}, 16), Mode::eval);
        CHECK(y.shape() == Shape{1, 3, 128, 128});
        CHECK(all_finite(y.data()));
        const auto yt = model.forward(random_tensor<float>({2, 1, 64, 64}, 17), Mode::train);
        CHECK(yt.shape() == Shape{2, 3, 64, 64});
      }
    }
    Model<float> model(tiny_config(Architecture::u_net), 1);
    CHECK_THROWS_AS(model.forward(Tensor<float>({1, 1, 96, 64}), Mode::eval), ShapeError);
  }

  TEST_CASE("full model gradient check at 64x64") {
    for (Architecture arch : kArchitectures) {
      CAPTURE(architecture_name(arch));
      Model<double> model(tiny_config(arch, 3), 5);
      // Zero-initialised biases put pre-activations exactly on the ReLU kink.
      Rng jitter(5, "bias-jitter");
      for (const auto& p : model.params().params()) {
        if (p.decay) continue;
        Tensor<double> t = p.tensor;
        for (double& v : t.data()) v += jitter.uniform(-0.1, 0.1);
      }
      auto x = random_tensor<double>({1, 1, 64, 64}, 18, 0.0, 1.0);
      std::vector<Tensor<double>> inputs{x};
      for (auto& p : model.params().params()) inputs.push_back(p.tensor);
      const auto r = grad_check([&] { return model.forward(x, Mode::eval); }, inputs, {1e-7, 2, 3});
      CAPTURE(r.max_relative_error);
      CHECK(r.passed(1e-4));
    }
  }

  TEST_CASE("same seed rebuilds bit-identical weights") {
    const ModelConfig c = tiny_config(Architecture::u_next, 6);
    Model<float> a(c, 42);
    Model<float> b(c, 42);
    Model<float> other(c, 43);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.params().params().size(); ++i) {
      const auto& pa = a.params().params()[i];
      const auto& pb = b.params().params()[i];
      CHECK(pa.name == pb.name);
      CHECK(same_values(pa.tensor, pb.tensor));
      if (!same_values(pa.tensor, other.params().params()[i].tensor)) any_diff = true;
    }
    CHECK(any_diff);
  }

  TEST_CASE("biases and norm parameters are excluded from decay") {
    Model<float> model(tiny_config(Architecture::half_u_net, 4), 1);
    for (const auto& p : model.params().params()) {
      CAPTURE(p.name);
      const bool is_weight = p.name.size() > 7 && p.name.rfind(".weight") == p.name.size() - 7 &&
                             p.name.find(".bn") == std::string::npos && p.name.find(".norm") == std::string::npos;
      CHECK(p.decay == is_weight);
    }
  }
}

TEST_SUITE("counting") {
  TEST_CASE("single conv examples") {
    ParamRegistry<float> reg;
    Conv2d<float> one(reg, "one", 1, 1, 1, {}, 0);
    CHECK(reg.total_elements() == 2);
    ParamRegistry<float> reg2;
    Conv2d<float> conv(reg2, "c", 4, 8, 3, {1, 1, 1}, 0);
    CHECK(reg2.total_elements() == 296);
    MacCounter counter;
    conv(Tensor<float>({1, 4, 8, 8}));
    CHECK(counter.count() == 18432);
  }

  TEST_CASE("analytic counts equal registry and instrumented counts") {
    Rng rng(2024, "count-configs");
    for (Architecture arch : kArchitectures) {
      for (int i = 0; i < 10; ++i) {
        const ModelConfig c = random_config(arch, rng, 8);
        CAPTURE(config_to_json_string(c));
        Model<float> model(c, static_cast<std::uint64_t>(i));
        CHECK(count_params(c) == enumerate_params(model));
        CHECK(count_macs(c, 64, 64) == instrumented_macs(model, 64, 64));
      }
    }
  }

  TEST_CASE("MACs scale with area and reject bad extents") {
    const ModelConfig c = tiny_config(Architecture::u_net, 4);
    CHECK(count_macs(c, 128, 128) == 4 * count_macs(c, 64, 64));
    CHECK_THROWS_AS(count_macs(c, 96, 64), ShapeError);
  }

  TEST_CASE("doubling encoder channels increases both counts") {
    Rng rng(7, "monotone");
    for (Architecture arch : kArchitectures) {
      for (int i = 0; i < 3; ++i) {
        ModelConfig c = random_config(arch, rng, 16);
        ModelConfig d = c;
        for (int& ch : d.encoder_channels) ch *= 2;
        d.decoder_channels = d.decoder_type == DecoderType::unet ? reversed(d.encoder_channels) : d.encoder_channels;
        CHECK(count_params(d) > count_params(c));
        CHECK(count_macs(d, 64, 64) > count_macs(c, 64, 64));
      }
    }
  }

  TEST_CASE("Half-U-Net at width 64 is smaller than the widening U-Net decoder") {
    for (BlockType block : {BlockType::unet, BlockType::convnext}) {
      ModelConfig half;
      half.block_type = block;
      half.decoder_type = DecoderType::half_unet;
      half.encoder_channels = {64, 64, 64, 64, 64};
      half.decoder_channels = half.encoder_channels;
      ModelConfig full = half;
      full.decoder_type = DecoderType::unet;
      full.encoder_channels = {64, 128, 256, 512, 1024};
      full.decoder_channels = reversed(full.encoder_channels);
      CHECK(count_params(half) < count_params(full));
    }
  }
}

TEST_SUITE("config") {
  TEST_CASE("architecture naming") {
    ModelConfig c;
    CHECK(architecture_name(architecture_of(c)) == "Half-U-NeXt");
    c.block_type = BlockType::unet;
    c.decoder_type = DecoderType::unet;
    CHECK(architecture_name(architecture_of(c)) == "U-Net");
    for (Architecture arch : kArchitectures) {
      CHECK(parse_architecture(architecture_name(arch)) == arch);
      CHECK(parse_architecture(architecture_slug(arch)) == arch);
    }
    CHECK(parse_architecture("HALF-U-NET") == Architecture::half_u_net);
    CHECK_THROWS_AS(parse_architecture("resnet"), ConfigError);
  }

  TEST_CASE("validation names the violated rule") {
    auto message = [](const ModelConfig& c) {
      try {
        validate(c);
      } catch (const ConfigError& e) {
        return std::string(e.what());
      }
      return std::string();
    };
    ModelConfig c = tiny_config(Architecture::u_net, 4);
    c.decoder_channels = c.encoder_channels;
    CHECK(message(c).find("reversed") != std::string::npos);

    c = tiny_config(Architecture::half_u_net);
    c.encoder_channels = {4, 4, 4, 4, 8};
    c.decoder_channels = c.encoder_channels;
    CHECK(message(c).find("all encoder_channels equal") != std::string::npos);

    c = tiny_config(Architecture::half_u_net);
    c.encoder_blocks[2] = 0;
    CHECK(message(c).find("encoder_blocks") != std::string::npos);

    c = tiny_config(Architecture::half_u_net, 1);
    CHECK(message(c).find("encoder_channels[0] must exceed input_channels") != std::string::npos);
    CHECK_THROWS_AS(Model<float>(c, 0), ConfigError);
  }

  TEST_CASE("JSON round trip uses the documented field names") {
    ModelConfig c = tiny_config(Architecture::u_next, 6);
    c.resmerge_blocks = 2;
    c.dropout = 0.25;
    const auto j = to_json(c);
    for (const char* key : {"block_type", "decoder_type", "encoder_channels", "decoder_channels", "encoder_blocks",
                            "decoder_blocks", "output_blocks", "resmerge_blocks", "dropout", "input_channels",
                            "output_channels"}) {
      CHECK(j.contains(key));
    }
    CHECK(j["block_type"] == "convnext");
    CHECK(j["decoder_type"] == "unet");
    CHECK(config_from_json_string(config_to_json_string(c)) == c);
    CHECK_THROWS_AS(config_from_json_string("{\"block_type\": \"vit\"}"), ConfigError);
    CHECK_THROWS_AS(config_from_json_string("not json"), ConfigError);
  }
}
