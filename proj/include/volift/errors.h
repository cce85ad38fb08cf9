#pragma once

#include <stdexcept>
#include <string>

namespace volift {

// Base of every error the library throws. The CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

// Value outside the domain a volume is tagged with (e.g. saving a coefficient volume as u8).
class DomainError : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

// Integer range exceeded (table wider than 2^16 symbols, symbol beyond 32 bits).
class RangeError : public ArgumentError {
public:
    using ArgumentError::ArgumentError;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Backward called without a cached forward, optimizer stepped without gradients.
class StateError : public Error {
public:
    using Error::Error;
};

class CorruptModelError : public Error {
public:
    using Error::Error;
};

class CorruptStreamError : public Error {
public:
    using Error::Error;
};

class NotIw3Error : public CorruptStreamError {
public:
    NotIw3Error() : CorruptStreamError("not an IW3D file") {}
};

class UnsupportedVersionError : public CorruptStreamError {
public:
    explicit UnsupportedVersionError(int version)
        : CorruptStreamError("unsupported version " + std::to_string(version)) {}
};

class WrongModelError : public CorruptStreamError {
public:
    using CorruptStreamError::CorruptStreamError;
};

// NaN/Inf in the training objective; term() names the offending loss component.
class DivergenceError : public Error {
public:
    explicit DivergenceError(std::string term)
        : Error("training diverged: non-finite " + term), term_(std::move(term)) {}
    const std::string& term() const noexcept { return term_; }

private:
    std::string term_;
};

} // namespace volift
