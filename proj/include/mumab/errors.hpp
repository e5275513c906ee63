#pragma once

#include <stdexcept>
#include <string>

namespace mumab {

// All matchings of the matrix share one system reward; J2 and the gap are undefined.
struct DegenerateMatrixError : std::runtime_error {
    explicit DegenerateMatrixError(const std::string& what) : std::runtime_error(what) {}
};

// Problem size exceeds a configured enumeration / exact-arithmetic cap.
struct SizeLimitError : std::runtime_error {
    explicit SizeLimitError(const std::string& what) : std::runtime_error(what) {}
};

// A pin filter removed every candidate matching; only reachable through a
// desynchronized or corrupted observation, never in a fault-free run.
struct EmptyAfterFilterError : std::runtime_error {
    explicit EmptyAfterFilterError(const std::string& what) : std::runtime_error(what) {}
};

// Bad user-supplied configuration (schema, ranges, distribution constraints).
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// File could not be opened / read / written.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace mumab
