#pragma once

#include <stdexcept>
#include <string>

namespace vacl {

/// Tensor extents do not agree for the requested operation.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Graph, group or mask is inconsistent with the model topology.
class StructuralError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Experiment configuration failed validation.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values showed up during training.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be read, written, or failed integrity checks.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace vacl
