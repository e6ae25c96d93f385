#include "gemmgan/data/tissue.hpp"

#include "gemmgan/core/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace gemmgan::data {

int otsu_threshold(const Histogram& histogram) {
  std::uint64_t total = 0, weighted = 0;
  int occupied = 0;
  for (int i = 0; i < 256; ++i) {
    total += histogram[i];
    weighted += static_cast<std::uint64_t>(i) * histogram[i];
    if (histogram[i] > 0) ++occupied;
  }
  if (occupied < 2) throw Error(ErrorCode::kSingleClassHistogram, "histogram mass lies in a single bin");

  // Between-class score (S0*w1 - S1*w0)^2 / (w0*w1), compared exactly as quotient and remainder.
  using u128 = unsigned __int128;
  struct Ratio {
    u128 quot, rem, den;
    bool operator>(const Ratio& o) const {
      if (quot != o.quot) return quot > o.quot;
      return rem * o.den > o.rem * den;
    }
  };
  std::uint64_t below = 0, below_sum = 0;
  Ratio best{0, 0, 1};
  bool have = false;
  int best_t = 1;
  for (int t = 1; t < 256; ++t) {
    below += histogram[t - 1];
    below_sum += static_cast<std::uint64_t>(t - 1) * histogram[t - 1];
    const std::uint64_t above = total - below;
    if (below == 0 || above == 0) continue;
    const __int128 diff = static_cast<__int128>(below_sum) * above - static_cast<__int128>(weighted - below_sum) * below;
    const u128 num = static_cast<u128>(diff < 0 ? -diff : diff);
    const u128 den = static_cast<u128>(below) * above;
    const u128 sq_quot = num / den, sq_rem = num % den;
    // num^2 / den = num * (num / den) = num*q + num*r/den
    const u128 whole = num * sq_quot + (num * sq_rem) / den;
    const Ratio score{whole, (num * sq_rem) % den, den};
    if (!have || score > best) {
      best = score;
      best_t = t;
      have = true;
    }
  }
  return best_t;
}

Histogram histogram_of(const GrayImage& image) {
  Histogram h{};
  for (auto v : image.values) ++h[v];
  return h;
}

std::pair<int, int> thumbnail_size(int width, int height, int max_side) {
  const int longest = std::max(width, height);
  if (longest <= max_side) return {width, height};
  const double s = static_cast<double>(max_side) / longest;
  return {std::max(1, static_cast<int>(std::lround(width * s))),
          std::max(1, static_cast<int>(std::lround(height * s)))};
}

TissueMask segment_tissue(const SlideImage& slide, int thumbnail_max_side) {
  const auto& img = slide.pixels;
  if (img.width <= 0 || img.height <= 0) throw Error(ErrorCode::kInvalidArgument, "empty slide " + slide.slide_id);
  const auto [tw, th] = thumbnail_size(img.width, img.height, thumbnail_max_side);
  const GrayImage sat = saturation_channel(img.resize_area(tw, th));
  const int t = otsu_threshold(histogram_of(sat));
  TissueMask mask{tw, th, std::vector<std::uint8_t>(sat.values.size())};
  for (std::size_t i = 0; i < sat.values.size(); ++i) mask.values[i] = sat.values[i] >= t ? 1 : 0;
  return mask;
}

std::string Tile::file_name() const {
  return slide_id + "_" + std::to_string(origin_x) + "_" + std::to_string(origin_y) + ".png";
}

std::vector<Tile> extract_tiles(const SlideImage& slide, const TissueMask& mask, int tile_size,
                                double min_tissue) {
  if (tile_size < 1) throw Error(ErrorCode::kInvalidArgument, "tile size must be >= 1");
  if (min_tissue < 0.0 || min_tissue >= 1.0) throw Error(ErrorCode::kInvalidArgument, "min_tissue must lie in [0, 1)");
  const int width = slide.pixels.width, height = slide.pixels.height;
  const int nx = width / tile_size, ny = height / tile_size;
  if (nx == 0 || ny == 0) return {};

  // Tile column/row of each mask pixel center, -1 outside the full-tile grid.
  auto bucket = [tile_size](int m, int mask_extent, int slide_extent, int n_tiles) {
    const double center = (m + 0.5) * static_cast<double>(slide_extent) / mask_extent;
    const int idx = static_cast<int>(std::floor(center / tile_size));
    return idx < n_tiles ? idx : -1;
  };
  std::vector<int> col(static_cast<std::size_t>(mask.width)), row(static_cast<std::size_t>(mask.height));
  for (int x = 0; x < mask.width; ++x) col[static_cast<std::size_t>(x)] = bucket(x, mask.width, width, nx);
  for (int y = 0; y < mask.height; ++y) row[static_cast<std::size_t>(y)] = bucket(y, mask.height, height, ny);

  std::vector<std::uint64_t> covered(static_cast<std::size_t>(nx) * ny, 0), counted(covered.size(), 0);
  for (int y = 0; y < mask.height; ++y) {
    const int r = row[static_cast<std::size_t>(y)];
    if (r < 0) continue;
    for (int x = 0; x < mask.width; ++x) {
      const int c = col[static_cast<std::size_t>(x)];
      if (c < 0) continue;
      const auto cell = static_cast<std::size_t>(r) * nx + c;
      ++counted[cell];
      covered[cell] += mask.at(x, y);
    }
  }

  std::vector<Tile> tiles;
  for (int r = 0; r < ny; ++r) {
    for (int c = 0; c < nx; ++c) {
      const auto cell = static_cast<std::size_t>(r) * nx + c;
      double fraction;
      if (counted[cell] > 0) {
        fraction = static_cast<double>(covered[cell]) / static_cast<double>(counted[cell]);
      } else {
        // Mask coarser than the tile: use the mask pixel under the tile center.
        const int mx = std::min(mask.width - 1, static_cast<int>((c + 0.5) * tile_size * mask.width / width));
        const int my = std::min(mask.height - 1, static_cast<int>((r + 0.5) * tile_size * mask.height / height));
        fraction = mask.at(mx, my);
      }
      if (fraction > min_tissue) {
        tiles.push_back({slide.slide_id, c * tile_size, r * tile_size, tile_size, fraction});
      }
    }
  }
  return tiles;
}

void write_tile_manifest(const std::filesystem::path& path, std::span<const Tile> tiles) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  for (const auto& t : tiles) {
    nlohmann::ordered_json j;
    j["slide_id"] = t.slide_id;
    j["origin_x"] = t.origin_x;
    j["origin_y"] = t.origin_y;
    j["size"] = t.size;
    j["tissue_fraction"] = t.tissue_fraction;
    out << j.dump() << '\n';
  }
}

std::vector<Tile> read_tile_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read tile manifest " + path.string());
  std::vector<Tile> tiles;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      tiles.push_back({j.at("slide_id").get<std::string>(), j.at("origin_x").get<int>(),
                       j.at("origin_y").get<int>(), j.at("size").get<int>(),
                       j.at("tissue_fraction").get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kIoError, "bad manifest line in " + path.string() + ": " + e.what());
    }
  }
  return tiles;
}

}  // namespace gemmgan::data
