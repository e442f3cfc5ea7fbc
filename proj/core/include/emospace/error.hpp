#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace emospace {

enum class ErrorCode {
    Io,
    Format,
    Checksum,
    Shape,
    Range,
    Duplicate,
    InvalidArgument,
    InsufficientData,
    Degenerate,
    Numerical,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-readable code; the CLI maps it onto its error report.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

}  // namespace emospace
