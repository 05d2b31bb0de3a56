#pragma once

#include <stdexcept>
#include <string>

namespace symc {

// Base for all library failures. The CLI maps the subclasses onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or missing input data (dataset files, circuit files, corpora).
class DataError : public Error {
public:
    using Error::Error;
};

// Non-finite values, singular systems, or other numeric breakdowns.
class NumericError : public Error {
public:
    using Error::Error;
};

// Precondition violations by the caller (dimension mismatch, bad config).
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace symc
