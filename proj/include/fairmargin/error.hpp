#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fairmargin {

enum class ErrorCode {
  kZeroVector,
  kDimensionMismatch,
  kLabelOutOfRange,
  kMarginOverflow,
  kEmptyBatch,
  kEmptyClass,
  kShapeMismatch,
  kTapeMismatch,
  kConfigInvalid,
  kSpecInvalid,
  kPrototypePlacementFailed,
  kClassTooSmall,
  kParseError,
  kSchemaMismatch,
  kIoError,
  kNotEnoughSamples,
  kUnknownId,
  kOneSidedInput,
  kUnknownAttribute,
  kTooFewGroups,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fairmargin
