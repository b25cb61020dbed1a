#pragma once

#include <stdexcept>
#include <string>

namespace alf {

// Base class for all toolkit errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dimension or convolution-geometry violation.
class ShapeError : public Error {
public:
    using Error::Error;
};

// NaN/Inf produced by a tensor op, or a diverged training step.
class NumericError : public Error {
public:
    using Error::Error;
};

// Malformed serialized container or checkpoint.
class FormatError : public Error {
public:
    using Error::Error;
};

// Invalid or inconsistent run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Filesystem failure.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace alf
