#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cadavae {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// An object was used out of sequence (e.g. backward without a matching forward).
class StateError : public Error {
public:
    using Error::Error;
};

/// A NaN or infinity reached a place where it must not.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A documented precondition on the inputs was violated.
class ContractError : public Error {
public:
    using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed binary file. Carries the byte offset where parsing stopped.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

}  // namespace cadavae
