#pragma once

#include <stdexcept>
#include <string>

namespace wagcn {

// Error taxonomy mirrored by CLI exit codes: validation -> 1, numeric -> 2, io -> 3.

struct validation_error : std::runtime_error {
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

struct io_error : std::runtime_error {
    explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk data (bad magic, truncated payload, unparseable manifest line).
struct format_error : io_error {
    explicit format_error(const std::string& msg) : io_error(msg) {}
};

} // namespace wagcn
