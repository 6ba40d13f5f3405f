#include "png_writer.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <vector>

#include "windcnn/errors.hpp"

namespace windcnn::tools {

namespace fs = std::filesystem;

void write_png_rgb(const fs::path& path, int width, int height, const std::string& rgb) {
  if (width <= 0 || height <= 0 || rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw DataError("PNG pixel buffer does not match " + std::to_string(width) + "x" + std::to_string(height));
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::vector<png_bytep> rows(static_cast<std::size_t>(height));
  for (int r = 0; r < height; ++r) {
    rows[r] = reinterpret_cast<png_bytep>(const_cast<char*>(rgb.data())) + static_cast<std::size_t>(r) * width * 3;
  }
  const fs::path tmp = path.string() + ".tmp";
  std::FILE* fp = std::fopen(tmp.c_str(), "wb");
  if (!fp) throw DataError("cannot open '" + tmp.string() + "' for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fs::remove(tmp);
    throw DataError("libpng failed writing '" + path.string() + "'");
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fclose(fp) != 0) {
    fs::remove(tmp);
    throw DataError("cannot finish writing '" + path.string() + "'");
  }
  fs::rename(tmp, path);
}

}  // namespace windcnn::tools
