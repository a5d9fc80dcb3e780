#pragma once

#include <stdexcept>
#include <string>

namespace datacook {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Incompatible tensor / layer / batch shapes.
struct ShapeError : Error {
    using Error::Error;
};

// Invalid argument value (negative sigma, empty input, bad target index, ...).
struct ParameterError : Error {
    using Error::Error;
};

// Malformed container bytes (bad magic, truncated payload, bad label range).
struct FormatError : Error {
    using Error::Error;
};

// NaN/Inf encountered where finite values are required.
struct NumericError : Error {
    using Error::Error;
};

// A hard constraint could not be satisfied (e.g. SSIM floor unreachable).
struct ConstraintError : Error {
    using Error::Error;
};

// Bad experiment configuration or CLI usage.
struct ConfigError : Error {
    using Error::Error;
};

// Metric has no defined value on this input (e.g. single-class AUC).
struct UndefinedMetricError : Error {
    using Error::Error;
};

} // namespace datacook
