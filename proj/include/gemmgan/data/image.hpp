#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gemmgan::data {

// Interleaved 8-bit RGB raster, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0);

  std::uint8_t* at(int x, int y) { return &pixels[3 * (static_cast<std::size_t>(y) * width + x)]; }
  const std::uint8_t* at(int x, int y) const {
    return &pixels[3 * (static_cast<std::size_t>(y) * width + x)];
  }

  RgbImage crop(int x0, int y0, int w, int h) const;
  // Area-average resampling to the given size.
  RgbImage resize_area(int new_width, int new_height) const;
};

struct SlideImage {
  std::string slide_id;
  RgbImage pixels;
  std::optional<double> mpp;
};

RgbImage read_png(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);

// Single-channel 8-bit raster.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;
};

void write_png(const std::filesystem::path& path, const GrayImage& image);

// HSV saturation scaled to [0, 255].
GrayImage saturation_channel(const RgbImage& image);

}  // namespace gemmgan::data
