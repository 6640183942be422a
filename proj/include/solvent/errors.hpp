#pragma once

#include <stdexcept>
#include <string>

namespace solvent {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Violated precondition or internal invariant; indicates a bug in the caller
// or in the bookkeeping, never a recoverable runtime condition.
class ContractViolation : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Malformed frame or message payload on the wire or in a file blob.
class ProtocolError : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

} // namespace solvent
