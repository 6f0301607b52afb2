#include "unicon/errors.hpp"

namespace unicon {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingFile: return "MissingFile";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::BadAgeIndex: return "BadAgeIndex";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::DecodeError: return "DecodeError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::NoAnnotatedSlices: return "NoAnnotatedSlices";
        case ErrorCode::CropTooLarge: return "CropTooLarge";
        case ErrorCode::UnknownAge: return "UnknownAge";
        case ErrorCode::CoordOutOfRange: return "CoordOutOfRange";
        case ErrorCode::ShapeError: return "ShapeError";
        case ErrorCode::BadSpec: return "BadSpec";
        case ErrorCode::AlreadyConditioned: return "AlreadyConditioned";
        case ErrorCode::EmptyAgeGroup: return "EmptyAgeGroup";
        case ErrorCode::NaNLoss: return "NaNLoss";
        case ErrorCode::BadConfig: return "BadConfig";
        case ErrorCode::UsageError: return "UsageError";
    }
    return "Error";
}

}  // namespace unicon
