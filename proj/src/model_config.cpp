#include "windcnn/model_config.hpp"

#include <algorithm>
#include <cctype>

#include "windcnn/errors.hpp"

namespace windcnn {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string list_str(const StageList& l) {
  std::string s = "[";
  for (std::size_t i = 0; i < l.size(); ++i) s += (i ? ", " : "") + std::to_string(l[i]);
  return s + "]";
}

}  // namespace

StageList reversed(const StageList& list) {
  StageList out = list;
  std::reverse(out.begin(), out.end());
  return out;
}

void validate(const ModelConfig& c) {
  if (c.input_channels < 1) throw ConfigError("input_channels must be >= 1");
  if (c.output_channels < 1) throw ConfigError("output_channels must be >= 1");
  for (int ch : c.encoder_channels) {
    if (ch < 1) throw ConfigError("encoder_channels entries must be >= 1, got " + list_str(c.encoder_channels));
  }
  if (c.encoder_channels[0] <= c.input_channels) {
    throw ConfigError("encoder_channels[0] must exceed input_channels (" +
                      std::to_string(c.encoder_channels[0]) + " <= " + std::to_string(c.input_channels) + ")");
  }
  for (int b : c.encoder_blocks) {
    if (b < 1) throw ConfigError("encoder_blocks entries must be >= 1, got " + list_str(c.encoder_blocks));
  }
  for (int b : c.decoder_blocks) {
    if (b < 1) throw ConfigError("decoder_blocks entries must be >= 1, got " + list_str(c.decoder_blocks));
  }
  if (c.output_blocks < 1) throw ConfigError("output_blocks must be >= 1");
  if (c.resmerge_blocks < 1) throw ConfigError("resmerge_blocks must be >= 1");
  if (!(c.dropout >= 0.0) || c.dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (c.decoder_type == DecoderType::unet) {
    if (c.decoder_channels != reversed(c.encoder_channels)) {
      throw ConfigError("U-Net decoder requires decoder_channels == reversed encoder_channels, got " +
                        list_str(c.decoder_channels) + " for encoder " + list_str(c.encoder_channels));
    }
  } else {
    if (c.decoder_channels != c.encoder_channels) {
      throw ConfigError("Half-U-Net decoder requires decoder_channels == encoder_channels, got " +
                        list_str(c.decoder_channels) + " for encoder " + list_str(c.encoder_channels));
    }
    if (std::adjacent_find(c.encoder_channels.begin(), c.encoder_channels.end(), std::not_equal_to<>()) !=
        c.encoder_channels.end()) {
      throw ConfigError("Half-U-Net decoder requires all encoder_channels equal, got " +
                        list_str(c.encoder_channels));
    }
  }
}

Architecture architecture_of(const ModelConfig& c) {
  if (c.decoder_type == DecoderType::half_unet) {
    return c.block_type == BlockType::convnext ? Architecture::half_u_next : Architecture::half_u_net;
  }
  return c.block_type == BlockType::convnext ? Architecture::u_next : Architecture::u_net;
}

BlockType block_type_of(Architecture a) {
  return a == Architecture::half_u_next || a == Architecture::u_next ? BlockType::convnext : BlockType::unet;
}

DecoderType decoder_type_of(Architecture a) {
  return a == Architecture::half_u_next || a == Architecture::half_u_net ? DecoderType::half_unet
                                                                         : DecoderType::unet;
}

std::string_view architecture_name(Architecture a) {
  switch (a) {
    case Architecture::half_u_next: return "Half-U-NeXt";
    case Architecture::half_u_net: return "Half-U-Net";
    case Architecture::u_next: return "U-NeXt";
    case Architecture::u_net: return "U-Net";
  }
  return "?";
}

std::string_view architecture_slug(Architecture a) {
  switch (a) {
    case Architecture::half_u_next: return "half-u-next";
    case Architecture::half_u_net: return "half-u-net";
    case Architecture::u_next: return "u-next";
    case Architecture::u_net: return "u-net";
  }
  return "?";
}

Architecture parse_architecture(std::string_view text) {
  const std::string t = lower(text);
  for (Architecture a : {Architecture::half_u_next, Architecture::half_u_net, Architecture::u_next,
                         Architecture::u_net}) {
    if (t == architecture_slug(a) || t == lower(architecture_name(a))) return a;
  }
  throw ConfigError("unknown architecture '" + std::string(text) +
                    "' (expected half-u-next, half-u-net, u-next or u-net)");
}

std::string_view to_string(BlockType t) { return t == BlockType::unet ? "unet" : "convnext"; }
std::string_view to_string(DecoderType t) { return t == DecoderType::unet ? "unet" : "half_unet"; }
std::string_view display_name(BlockType t) { return t == BlockType::unet ? "U-Net" : "ConvNeXt"; }
std::string_view display_name(DecoderType t) { return t == DecoderType::unet ? "U-Net" : "Half U-Net"; }

nlohmann::json to_json(const ModelConfig& c) {
  return nlohmann::json{{"block_type", to_string(c.block_type)},
                        {"decoder_type", to_string(c.decoder_type)},
                        {"encoder_channels", c.encoder_channels},
                        {"decoder_channels", c.decoder_channels},
                        {"encoder_blocks", c.encoder_blocks},
                        {"decoder_blocks", c.decoder_blocks},
                        {"output_blocks", c.output_blocks},
                        {"resmerge_blocks", c.resmerge_blocks},
                        {"dropout", c.dropout},
                        {"input_channels", c.input_channels},
                        {"output_channels", c.output_channels}};
}

ModelConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  try {
    const std::string block = doc.at("block_type").get<std::string>();
    if (block == "unet") c.block_type = BlockType::unet;
    else if (block == "convnext") c.block_type = BlockType::convnext;
    else throw ConfigError("block_type must be 'unet' or 'convnext', got '" + block + "'");
    const std::string decoder = doc.at("decoder_type").get<std::string>();
    if (decoder == "unet") c.decoder_type = DecoderType::unet;
    else if (decoder == "half_unet") c.decoder_type = DecoderType::half_unet;
    else throw ConfigError("decoder_type must be 'unet' or 'half_unet', got '" + decoder + "'");
    c.encoder_channels = doc.at("encoder_channels").get<StageList>();
    c.decoder_channels = doc.at("decoder_channels").get<StageList>();
    c.encoder_blocks = doc.at("encoder_blocks").get<StageList>();
    c.decoder_blocks = doc.at("decoder_blocks").get<StageList>();
    c.output_blocks = doc.at("output_blocks").get<int>();
    c.resmerge_blocks = doc.at("resmerge_blocks").get<int>();
    c.dropout = doc.at("dropout").get<double>();
    c.input_channels = doc.value("input_channels", 1);
    c.output_channels = doc.value("output_channels", 3);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  return c;
}

std::string config_to_json_string(const ModelConfig& c) { return to_json(c).dump(); }

ModelConfig config_from_json_string(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
  }
  return config_from_json(doc);
}

}  // namespace windcnn
