#include "agg/error.hpp"

namespace agg {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::NonFiniteInput: return "NonFiniteInput";
        case ErrorCode::DegenerateQuaternion: return "DegenerateQuaternion";
        case ErrorCode::SingularCovariance: return "SingularCovariance";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::MalformedHeader: return "MalformedHeader";
        case ErrorCode::CountMismatch: return "CountMismatch";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::GraphConsumed: return "GraphConsumed";
        case ErrorCode::MissingGradient: return "MissingGradient";
        case ErrorCode::IndivisibleWidth: return "IndivisibleWidth";
        case ErrorCode::EmptySet: return "EmptySet";
        case ErrorCode::InvalidRange: return "InvalidRange";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::CheckpointMismatch: return "CheckpointMismatch";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

}  // namespace agg
