#pragma once

#include <stdexcept>
#include <string>

namespace grushin {

// Failure categories; the numeric values double as CLI exit codes.
enum class ErrorCode {
    validation = 2,
    nonconvergence = 3,
    threshold = 4,
    invalid_argument = 10,
    io = 11,
    internal = 12,
};

struct Error : std::runtime_error {
    ErrorCode code;
    Error(ErrorCode c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

}  // namespace grushin
