#pragma once

#include <array>
#include <string>
#include <string_view>

#include <json.hpp>

namespace windcnn {

enum class BlockType { unet, convnext };
enum class DecoderType { unet, half_unet };

/// The four block/decoder combinations.
enum class Architecture { half_u_next, half_u_net, u_next, u_net };

using StageList = std::array<int, 5>;

/// Architectural genotype. JSON field names match the member names.
struct ModelConfig {
  BlockType block_type = BlockType::convnext;
  DecoderType decoder_type = DecoderType::half_unet;
  StageList encoder_channels{32, 32, 32, 32, 32};
  StageList decoder_channels{32, 32, 32, 32, 32};
  StageList encoder_blocks{1, 1, 1, 1, 1};
  StageList decoder_blocks{1, 1, 1, 1, 1};
  int output_blocks = 1;
  int resmerge_blocks = 1;
  double dropout = 0.1;
  int input_channels = 1;
  int output_channels = 3;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Throws ConfigError naming the first violated rule.
void validate(const ModelConfig& config);

Architecture architecture_of(const ModelConfig& config);
BlockType block_type_of(Architecture arch);
DecoderType decoder_type_of(Architecture arch);

/// "Half-U-NeXt", "Half-U-Net", "U-NeXt", "U-Net".
std::string_view architecture_name(Architecture arch);
/// "half-u-next", "half-u-net", "u-next", "u-net".
std::string_view architecture_slug(Architecture arch);
/// Accepts either the display name or the slug, case-insensitively.
Architecture parse_architecture(std::string_view text);

std::string_view to_string(BlockType type);
std::string_view to_string(DecoderType type);
/// Table-style labels: "ConvNeXt"/"U-Net" and "U-Net"/"Half U-Net".
std::string_view display_name(BlockType type);
std::string_view display_name(DecoderType type);

StageList reversed(const StageList& list);

nlohmann::json to_json(const ModelConfig& config);
/// Throws ConfigError on missing fields, wrong types, or unknown enum values.
ModelConfig config_from_json(const nlohmann::json& doc);
std::string config_to_json_string(const ModelConfig& config);
ModelConfig config_from_json_string(std::string_view text);

}  // namespace windcnn
