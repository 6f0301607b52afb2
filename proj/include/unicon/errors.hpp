#pragma once

#include <stdexcept>
#include <string>

namespace unicon {

enum class ErrorCode {
    MissingFile,
    ShapeMismatch,
    BadAgeIndex,
    IndexOutOfRange,
    DecodeError,
    IoError,
    NoAnnotatedSlices,
    CropTooLarge,
    UnknownAge,
    CoordOutOfRange,
    ShapeError,
    BadSpec,
    AlreadyConditioned,
    EmptyAgeGroup,
    NaNLoss,
    BadConfig,
    UsageError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

}  // namespace unicon
