#pragma once

#include <stdexcept>
#include <string>

namespace lodmsq {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments or configuration (maps to CLI exit code 2).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// File system or stream failure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents: truncated records, bad magic, checksum mismatch.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Index container written by an unknown format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Iterative numerical routine failed to converge.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace lodmsq
