#include "fairmargin/error.hpp"

namespace fairmargin {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kLabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::kMarginOverflow: return "MarginOverflow";
    case ErrorCode::kEmptyBatch: return "EmptyBatch";
    case ErrorCode::kEmptyClass: return "EmptyClass";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kTapeMismatch: return "TapeMismatch";
    case ErrorCode::kConfigInvalid: return "ConfigInvalid";
    case ErrorCode::kSpecInvalid: return "SpecInvalid";
    case ErrorCode::kPrototypePlacementFailed: return "PrototypePlacementFailed";
    case ErrorCode::kClassTooSmall: return "ClassTooSmall";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kNotEnoughSamples: return "NotEnoughSamples";
    case ErrorCode::kUnknownId: return "UnknownId";
    case ErrorCode::kOneSidedInput: return "OneSidedInput";
    case ErrorCode::kUnknownAttribute: return "UnknownAttribute";
    case ErrorCode::kTooFewGroups: return "TooFewGroups";
  }
  return "Unknown";
}

}  // namespace fairmargin
