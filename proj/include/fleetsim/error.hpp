#pragma once

#include <stdexcept>
#include <string>

namespace fleetsim {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input row or message.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Well-formed input that violates a model invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IllegalTransition : public Error {
public:
    using Error::Error;
};

class Unreachable : public Error {
public:
    using Error::Error;
};

class OutOfBounds : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class DegenerateProfile : public Error {
public:
    using Error::Error;
};

class MissingRecord : public Error {
public:
    using Error::Error;
};

class HorizonExceeded : public Error {
public:
    using Error::Error;
};

}  // namespace fleetsim
