#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sclslam {

enum class ErrorCode {
    kAngleNearPi,
    kInvalidLeaf,
    kParseError,
    kUnsupportedFieldLayout,
    kIoError,
    kShapeMismatch,
    kDuplicateId,
    kUnknownId,
    kEmptyCloud,
    kNoCorrespondences,
    kUnknownIndex,
    kInvalidPair,
    kGaugeUnfixed,
    kLinearSolveFailure,
    kFormatMismatch,
    kInvalidArgument,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    // True for errors caused by bad user input (files, flags, parameters).
    bool is_input_error() const noexcept;

private:
    ErrorCode code_;
};

}  // namespace sclslam
