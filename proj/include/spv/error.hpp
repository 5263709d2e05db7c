#pragma once

#include <stdexcept>
#include <string>

namespace spv {

/// Base class for all errors raised by the engine. The CLI maps each
/// subclass to a distinct exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or construction parameters.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input outside the domain of a mapping (e.g. beyond the working window).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Caller violated an operation's precondition (size mismatch etc).
class ContractError : public Error {
public:
    using Error::Error;
};

/// A file or message failed validation; the message names the invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace spv
