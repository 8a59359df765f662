#pragma once

#include <stdexcept>
#include <string>

namespace erd {

// Base class for recoverable errors raised by this library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input bytes could not be parsed (malformed JSON, bad date string, ...).
class ParseError : public Error {
public:
    using Error::Error;
};

// Input parsed but does not match the expected shape (missing field,
// wrong type, out-of-range value).
class SchemaError : public Error {
public:
    using Error::Error;
};

// A record that must be unique appeared twice.
class DuplicateError : public Error {
public:
    using Error::Error;
};

// An argument or state violates an operation's preconditions.
class ValidationError : public Error {
public:
    using Error::Error;
};

}  // namespace erd
