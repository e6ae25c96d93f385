#include "gemmgan/encoders/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

namespace gemmgan::encoders {
namespace {

constexpr double kGrayWeights[3] = {0.299, 0.587, 0.114};
constexpr double kDarkThreshold = 0.5;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

RowVector StubImageEncoder::encode(const data::RgbImage& tile) const {
  const int w = tile.width, h = tile.height;
  if (w <= 0 || h <= 0) throw Error(ErrorCode::kEncoderFailure, "empty tile");
  const double n = static_cast<double>(w) * h;
  double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0};
  double sat = 0, value = 0, gray_sum = 0, dark = 0, grad_x = 0, grad_y = 0;
  std::vector<double> gray(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto* p = tile.at(x, y);
      double rgb[3];
      for (int c = 0; c < 3; ++c) {
        rgb[c] = p[c] / 255.0;
        sum[c] += rgb[c];
        sq[c] += rgb[c] * rgb[c];
      }
      const double mx = std::max({rgb[0], rgb[1], rgb[2]});
      const double mn = std::min({rgb[0], rgb[1], rgb[2]});
      sat += mx > 0.0 ? (mx - mn) / mx : 0.0;
      value += mx;
      const double g = kGrayWeights[0] * rgb[0] + kGrayWeights[1] * rgb[1] + kGrayWeights[2] * rgb[2];
      gray[static_cast<std::size_t>(y) * w + x] = g;
      gray_sum += g;
      if (g < kDarkThreshold) dark += 1.0;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      grad_x += std::abs(gray[static_cast<std::size_t>(y) * w + x + 1] - gray[static_cast<std::size_t>(y) * w + x]);
    }
  }
  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x < w; ++x) {
      grad_y += std::abs(gray[static_cast<std::size_t>(y + 1) * w + x] - gray[static_cast<std::size_t>(y) * w + x]);
    }
  }
  RowVector f(kNativeDim);
  for (int c = 0; c < 3; ++c) {
    const double mu = sum[c] / n;
    f(c) = mu;
    f(3 + c) = std::sqrt(std::max(0.0, sq[c] / n - mu * mu));
  }
  f(6) = sat / n;
  f(7) = value / n;
  f(8) = gray_sum / n;
  f(9) = w > 1 ? grad_x / (static_cast<double>(w - 1) * h) : 0.0;
  f(10) = h > 1 ? grad_y / (static_cast<double>(h - 1) * w) : 0.0;
  f(11) = dark / n;
  return f;
}

std::vector<double> StubImageEncoder::frozen_parameters() const {
  return {kGrayWeights[0], kGrayWeights[1], kGrayWeights[2], kDarkThreshold};
}

std::vector<std::string> StubTextEncoder::tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

Index StubTextEncoder::bucket(std::string_view token) {
  return static_cast<Index>(fnv1a(token) % static_cast<std::uint64_t>(kNativeDim));
}

Matrix StubTextEncoder::encode(const std::string& text, Index max_tokens) const {
  if (max_tokens < 1) throw Error(ErrorCode::kEncoderFailure, "max_tokens must be >= 1");
  auto tokens = tokenize(text);
  if (tokens.empty()) throw Error(ErrorCode::kEncoderFailure, "text has no tokens");
  const auto kept = std::min<std::size_t>(tokens.size(), static_cast<std::size_t>(max_tokens - 1));
  Matrix out = Matrix::Zero(static_cast<Index>(kept) + 1, kNativeDim);
  for (std::size_t i = 0; i < kept; ++i) {
    const Index b = bucket(tokens[i]);
    out(static_cast<Index>(i) + 1, b) = 1.0;
    out(0, b) += 1.0;
  }
  const double norm = out.row(0).norm();
  if (norm > 0.0) out.row(0) /= norm;
  return out;
}

std::vector<double> StubTextEncoder::frozen_parameters() const {
  return {static_cast<double>(kNativeDim), static_cast<double>(fnv1a("") & 0xffff)};
}

std::shared_ptr<const ImageEncoder> make_image_encoder(std::string_view name) {
  if (name == "stub-image") return std::make_shared<StubImageEncoder>();
  throw Error(ErrorCode::kEncoderFailure, "image encoder '" + std::string(name) + "' is not available");
}

std::shared_ptr<const TextEncoder> make_text_encoder(std::string_view name) {
  if (name == "stub-text") return std::make_shared<StubTextEncoder>();
  throw Error(ErrorCode::kEncoderFailure, "text encoder '" + std::string(name) + "' is not available");
}

Matrix encode_native(const ImageEncoder& encoder, std::span<const data::RgbImage> tiles) {
  if (tiles.empty()) throw Error(ErrorCode::kNoTiles, "no tiles to encode");
  Matrix out(static_cast<Index>(tiles.size()), encoder.native_dim());
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    RowVector f = encoder.encode(tiles[i]);
    if (f.size() != encoder.native_dim() || !f.allFinite()) {
      throw Error(ErrorCode::kEncoderFailure, encoder.name() + " produced an invalid feature vector");
    }
    out.row(static_cast<Index>(i)) = f;
  }
  return out;
}

PatchEmbeddingMatrix encode_patches(const ImageAdapter& adapter, std::span<const data::RgbImage> tiles,
                                    const std::string& slide_id, std::vector<std::string> patch_refs) {
  PatchEmbeddingMatrix out;
  out.values = adapter.project(encode_native(adapter.encoder(), tiles));
  out.slide_id = slide_id;
  out.patch_refs = std::move(patch_refs);
  return out;
}

TextEmbeddingMatrix encode_text(const TextAdapter& adapter, const std::string& text, Index max_tokens) {
  if (text.empty()) throw Error(ErrorCode::kEncoderFailure, "empty text");
  return {adapter.project(adapter.encoder().encode(text, max_tokens))};
}

std::vector<Index> sample_patch_indices(Index available, Index n, Rng& rng) {
  if (available < 1) throw Error(ErrorCode::kNoTiles, "no tiles available for sampling");
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(n));
  if (available >= n) {
    std::vector<Index> pool(static_cast<std::size_t>(available));
    std::iota(pool.begin(), pool.end(), Index{0});
    for (Index i = 0; i < n; ++i) {
      std::uniform_int_distribution<Index> pick(i, available - 1);
      std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
      out.push_back(pool[static_cast<std::size_t>(i)]);
    }
  } else {
    std::uniform_int_distribution<Index> pick(0, available - 1);
    for (Index i = 0; i < n; ++i) out.push_back(pick(rng));
  }
  return out;
}

}  // namespace gemmgan::encoders
