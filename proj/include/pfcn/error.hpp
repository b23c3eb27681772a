#pragma once

#include <stdexcept>
#include <string>

namespace pfcn {

/// Invalid configuration: channel mismatch, unknown mode, unknown key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input data that violates a precondition (shape, divisibility, ranges).
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Structural inconsistency detected by a validator (id maps, segment lists).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite loss or similar numerical failure during optimization.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace pfcn
