#pragma once

#include <stdexcept>
#include <string>

namespace agg {

enum class ErrorCode {
    NonFiniteInput = 1,
    DegenerateQuaternion,
    SingularCovariance,
    IoError,
    MalformedHeader,
    CountMismatch,
    ShapeMismatch,
    GraphConsumed,
    MissingGradient,
    IndivisibleWidth,
    EmptySet,
    InvalidRange,
    ConfigError,
    CheckpointMismatch,
    InvalidArgument,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace agg
