#pragma once
#include <stdexcept>
#include <string>

namespace kgctx {

// Base error for all data/processing failures. CLI maps these to exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Remote-service failure that a caller may retry (connection refused,
// non-200 status). Carries no state beyond the message.
class TransportError : public Error {
public:
    using Error::Error;
};

} // namespace kgctx
