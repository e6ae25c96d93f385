#include "gemmgan/core/error.hpp"
#include "gemmgan/core/types.hpp"

namespace gemmgan {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kSingleClassHistogram: return "SingleClassHistogram";
    case ErrorCode::kAllGenesDropped: return "AllGenesDropped";
    case ErrorCode::kTooFewCases: return "TooFewCases";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kEncoderFailure: return "EncoderFailure";
    case ErrorCode::kNoTiles: return "NoTiles";
    case ErrorCode::kKeyNotFound: return "KeyNotFound";
    case ErrorCode::kCorruptEntry: return "CorruptEntry";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kHeadsDontDivide: return "HeadsDontDivide";
    case ErrorCode::kUnknownVariant: return "UnknownVariant";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kMissingLabels: return "MissingLabels";
    case ErrorCode::kCorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kClassAbsentInTrain: return "ClassAbsentInTrain";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * path.size());
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto p : path) push(p);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

Matrix standard_normal(Index rows, Index cols, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

Segments Segments::uniform(Index count, Index length) {
  Segments s;
  s.offsets.resize(static_cast<std::size_t>(count) + 1);
  for (Index b = 0; b <= count; ++b) s.offsets[static_cast<std::size_t>(b)] = b * length;
  return s;
}

Segments Segments::from_lengths(const std::vector<Index>& lengths) {
  Segments s;
  s.offsets.reserve(lengths.size() + 1);
  for (auto len : lengths) s.offsets.push_back(s.offsets.back() + len);
  return s;
}

void round_to_float(Matrix& m) {
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
}

FloatMatrix to_float(const Matrix& m) { return m.cast<float>(); }

Matrix to_double(const FloatMatrix& m) { return m.cast<double>(); }

}  // namespace gemmgan
