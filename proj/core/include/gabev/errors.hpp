#pragma once

#include <stdexcept>
#include <string>

namespace gabev {

// Caller broke a documented precondition (shape mismatch, bad dims).
class ContractViolation : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A value failed its domain invariant (non-orthonormal pose, bad config).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Simulator refused a state (camera inside an obstacle, endpoint not free).
class SimError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dialogue protocol broken by a policy (wrong action count, exhausted log).
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class IoErrorKind {
    MissingFile,
    BadMagic,
    DimOverflow,
    Truncated,
    VersionMismatch,
    ShapeMismatch,
    NonFinite,
    Parse,
    Write,
};

const char* to_string(IoErrorKind kind);

// Persistence failure; always names the offending file.
class IoError : public std::runtime_error {
public:
    IoError(IoErrorKind kind, std::string file, const std::string& detail)
        : std::runtime_error(std::string(to_string(kind)) + ": " + file + ": " + detail),
          kind_(kind),
          file_(std::move(file)) {}

    IoErrorKind kind() const noexcept { return kind_; }
    const std::string& file() const noexcept { return file_; }

private:
    IoErrorKind kind_;
    std::string file_;
};

}  // namespace gabev
