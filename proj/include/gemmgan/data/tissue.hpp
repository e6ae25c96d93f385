#pragma once

#include "gemmgan/data/image.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gemmgan::data {

using Histogram = std::array<std::uint64_t, 256>;

// Otsu threshold t in [1, 255] splitting intensities into [0, t) and [t, 255]
// with maximal between-class variance; the smallest t wins ties.
// Throws kSingleClassHistogram when all mass sits in one bin.
int otsu_threshold(const Histogram& histogram);

Histogram histogram_of(const GrayImage& image);

// Binary tissue mask at thumbnail resolution (1 = tissue).
struct TissueMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;

  std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

inline constexpr int kDefaultThumbnailMaxSide = 2048;

// Thumbnail size for a slide whose longer side is scaled to at most max_side.
std::pair<int, int> thumbnail_size(int width, int height, int max_side);

// Otsu on the saturation channel of the downsampled slide; tissue pixels are
// those at or above the threshold.
TissueMask segment_tissue(const SlideImage& slide, int thumbnail_max_side = kDefaultThumbnailMaxSide);

inline constexpr int kDefaultTileSize = 256;
inline constexpr double kDefaultMinTissue = 0.2;

struct Tile {
  std::string slide_id;
  int origin_x = 0;
  int origin_y = 0;
  int size = kDefaultTileSize;
  double tissue_fraction = 0.0;

  std::string file_name() const;
};

// Non-overlapping stride-P grid; keeps tiles whose mask coverage is strictly
// above min_tissue. Coverage counts mask pixels whose centers fall inside the
// tile footprint.
std::vector<Tile> extract_tiles(const SlideImage& slide, const TissueMask& mask, int tile_size,
                                double min_tissue);

// Newline-delimited JSON, one tile per line.
void write_tile_manifest(const std::filesystem::path& path, std::span<const Tile> tiles);
std::vector<Tile> read_tile_manifest(const std::filesystem::path& path);

}  // namespace gemmgan::data
