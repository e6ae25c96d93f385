#include "gemmgan/data/image.hpp"

#include "gemmgan/core/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace gemmgan::data {

RgbImage::RgbImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

RgbImage RgbImage::crop(int x0, int y0, int w, int h) const {
  if (x0 < 0 || y0 < 0 || x0 + w > width || y0 + h > height) {
    throw Error(ErrorCode::kInvalidArgument, "crop outside image bounds");
  }
  RgbImage out(w, h);
  for (int y = 0; y < h; ++y) {
    std::memcpy(out.at(0, y), at(x0, y0 + y), static_cast<std::size_t>(w) * 3);
  }
  return out;
}

RgbImage RgbImage::resize_area(int new_width, int new_height) const {
  if (new_width == width && new_height == height) return *this;
  RgbImage out(new_width, new_height);
  const double sx = static_cast<double>(width) / new_width;
  const double sy = static_cast<double>(height) / new_height;
  for (int y = 0; y < new_height; ++y) {
    const int y0 = static_cast<int>(std::floor(y * sy));
    const int y1 = std::max(y0 + 1, static_cast<int>(std::floor((y + 1) * sy)));
    for (int x = 0; x < new_width; ++x) {
      const int x0 = static_cast<int>(std::floor(x * sx));
      const int x1 = std::max(x0 + 1, static_cast<int>(std::floor((x + 1) * sx)));
      double acc[3] = {0, 0, 0};
      for (int yy = y0; yy < std::min(y1, height); ++yy) {
        for (int xx = x0; xx < std::min(x1, width); ++xx) {
          const auto* p = at(xx, yy);
          for (int c = 0; c < 3; ++c) acc[c] += p[c];
        }
      }
      const double n = static_cast<double>((std::min(y1, height) - y0) * (std::min(x1, width) - x0));
      for (int c = 0; c < 3; ++c) out.at(x, y)[c] = static_cast<std::uint8_t>(std::lround(acc[c] / n));
    }
  }
  return out;
}

RgbImage read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_file(&image, path.c_str()) == 0) {
    throw Error(ErrorCode::kIoError, "cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  RgbImage out(static_cast<int>(image.width), static_cast<int>(image.height));
  if (png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr) == 0) {
    png_image_free(&image);
    throw Error(ErrorCode::kIoError, "cannot decode PNG " + path.string() + ": " + image.message);
  }
  return out;
}

namespace {

void write_raw_png(const std::filesystem::path& path, int width, int height, png_uint_32 format,
                   const void* data) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = format;
  if (png_image_write_to_file(&image, path.c_str(), 0, data, 0, nullptr) == 0) {
    throw Error(ErrorCode::kIoError, "cannot write PNG " + path.string() + ": " + image.message);
  }
}

}  // namespace

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  write_raw_png(path, image.width, image.height, PNG_FORMAT_RGB, image.pixels.data());
}

void write_png(const std::filesystem::path& path, const GrayImage& image) {
  write_raw_png(path, image.width, image.height, PNG_FORMAT_GRAY, image.values.data());
}

GrayImage saturation_channel(const RgbImage& image) {
  GrayImage out{image.width, image.height, {}};
  out.values.resize(static_cast<std::size_t>(image.width) * image.height);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const auto* p = &image.pixels[3 * i];
    const int mx = std::max({p[0], p[1], p[2]});
    const int mn = std::min({p[0], p[1], p[2]});
    out.values[i] = mx == 0 ? 0 : static_cast<std::uint8_t>((255 * (mx - mn) + mx / 2) / mx);
  }
  return out;
}

}  // namespace gemmgan::data
