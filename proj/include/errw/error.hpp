#pragma once

#include <stdexcept>
#include <string>

namespace errw {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad index, wrong graph mode, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A numerical kernel could not produce a trustworthy result.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Malformed input file or configuration.
class ParseError : public Error {
public:
    using Error::Error;
};

} // namespace errw
