#pragma once

#include <stdexcept>
#include <string>

namespace radnet {

// Error taxonomy shared by the library and the CLI. The CLI maps each
// category to a distinct exit code.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape or axis incompatibility between tensors.
class DimensionError : public Error {
public:
    explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Bad configuration value, out-of-range parameter, or malformed input file
// content that parsed but failed validation.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// A computation would exceed an explicit resource budget.
class CapacityError : public Error {
public:
    explicit CapacityError(const std::string& msg) : Error(msg) {}
};

// Non-finite values or diverged numerics.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Filesystem and serialization failures.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

class BadMagicError : public IoError {
public:
    explicit BadMagicError(const std::string& msg) : IoError(msg) {}
};

class VersionError : public IoError {
public:
    explicit VersionError(const std::string& msg) : IoError(msg) {}
};

class TruncatedError : public IoError {
public:
    explicit TruncatedError(const std::string& msg) : IoError(msg) {}
};

class IndexError : public IoError {
public:
    explicit IndexError(const std::string& msg) : IoError(msg) {}
};

}  // namespace radnet
