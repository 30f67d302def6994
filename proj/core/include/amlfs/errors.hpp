#pragma once

#include <stdexcept>
#include <string>

namespace amlfs {

// Error taxonomy used across the library. The CLI maps uncaught errors to
// exit code 1; flag/usage problems never reach these classes.

// Input outside a function's definition domain. Callers that can clamp must
// do so explicitly before the call.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Mismatched vector/matrix dimensions or empty inputs where data is required.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite values where finite math was expected.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed bytes in a file (bad magic, truncation, unparsable fields).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Structurally valid inputs that disagree with each other.
class ConsistencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace amlfs
