#include "oodp/image_io.hpp"

#include <png.h>

#include <cstring>
#include <stdexcept>

namespace oodp {

void write_png(const env::Image& img, const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.w);
  image.height = static_cast<png_uint_32>(img.h);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.rgb.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write " + path.string() + ": " + image.message);
  }
}

env::Image read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw std::runtime_error("cannot read " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  env::Image out(static_cast<int>(image.height), static_cast<int>(image.width));
  if (!png_image_finish_read(&image, nullptr, out.rgb.data(), 0, nullptr)) {
    png_image_free(&image);
    throw std::runtime_error("cannot decode " + path.string() + ": " + image.message);
  }
  return out;
}

}  // namespace oodp
