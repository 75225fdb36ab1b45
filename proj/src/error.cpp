#include "sclslam/error.hpp"

namespace sclslam {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::kAngleNearPi: return "AngleNearPi";
        case ErrorCode::kInvalidLeaf: return "InvalidLeaf";
        case ErrorCode::kParseError: return "ParseError";
        case ErrorCode::kUnsupportedFieldLayout: return "UnsupportedFieldLayout";
        case ErrorCode::kIoError: return "IoError";
        case ErrorCode::kShapeMismatch: return "ShapeMismatch";
        case ErrorCode::kDuplicateId: return "DuplicateId";
        case ErrorCode::kUnknownId: return "UnknownId";
        case ErrorCode::kEmptyCloud: return "EmptyCloud";
        case ErrorCode::kNoCorrespondences: return "NoCorrespondences";
        case ErrorCode::kUnknownIndex: return "UnknownIndex";
        case ErrorCode::kInvalidPair: return "InvalidPair";
        case ErrorCode::kGaugeUnfixed: return "GaugeUnfixed";
        case ErrorCode::kLinearSolveFailure: return "LinearSolveFailure";
        case ErrorCode::kFormatMismatch: return "FormatMismatch";
        case ErrorCode::kInvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

bool Error::is_input_error() const noexcept {
    switch (code_) {
        case ErrorCode::kInvalidLeaf:
        case ErrorCode::kParseError:
        case ErrorCode::kUnsupportedFieldLayout:
        case ErrorCode::kIoError:
        case ErrorCode::kFormatMismatch:
        case ErrorCode::kInvalidArgument:
            return true;
        default:
            return false;
    }
}

}  // namespace sclslam
