#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gemmgan {

enum class ErrorCode {
  kSingleClassHistogram,
  kAllGenesDropped,
  kTooFewCases,
  kInvalidArgument,
  kEncoderFailure,
  kNoTiles,
  kKeyNotFound,
  kCorruptEntry,
  kDimensionMismatch,
  kHeadsDontDivide,
  kUnknownVariant,
  kNonFiniteLoss,
  kMissingLabels,
  kCorruptCheckpoint,
  kVersionMismatch,
  kTooFewPoints,
  kTooFewSamples,
  kClassAbsentInTrain,
  kIoError,
  kConfigError,
};

std::string_view error_code_name(ErrorCode code);

// Single exception type for the library; callers dispatch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace gemmgan
