#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace windcnn::tools {

/// Writes an 8-bit RGB PNG from row-major pixel-interleaved bytes
/// (width * height * 3). The file appears atomically via rename.
void write_png_rgb(const std::filesystem::path& path, int width, int height, const std::string& rgb);

}  // namespace windcnn::tools
