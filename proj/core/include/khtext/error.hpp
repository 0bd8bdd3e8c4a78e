#pragma once

#include <stdexcept>
#include <string>

namespace khtext {

/// Base class for every error raised by the library. Messages are one line
/// and self-contained so the CLI can print them verbatim.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for malformed inputs: bad UTF-8, schema violations, shape mismatches.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Raised when a model file cannot be read back.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace khtext
