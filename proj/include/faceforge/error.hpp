#pragma once

#include <stdexcept>
#include <string>

namespace faceforge {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when an input does not have the dimensions an operation expects.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Failures while decoding one of the binary or text containers.
class FormatError : public Error {
public:
    enum class Kind {
        Io,
        BadMagic,
        MalformedHeader,
        UnexpectedEnd,
        TrailingData,
        ShapeMismatch,
        NonFinite,
        Validation,
    };

    FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class NotFoundError : public Error {
public:
    using Error::Error;
};

} // namespace faceforge
