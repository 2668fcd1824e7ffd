#pragma once

#include <stdexcept>
#include <string>

namespace gravilon {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A value that is structurally fine but not acceptable (NaN gradient, empty dataset, ...).
class InvalidInput : public Error {
public:
    using Error::Error;
};

// Caller broke an API precondition: mismatched layouts, wrong matrix shapes.
class ContractError : public Error {
public:
    using Error::Error;
};

// Malformed file content. The message names the offending field.
class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace gravilon
