#pragma once

#include <stdexcept>
#include <string>

namespace llmpoet {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a configuration document is malformed or out of range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Raised on filesystem failures (unwritable run directory, missing file, ...).
class IoError : public Error {
 public:
  using Error::Error;
};

/// A generator could not produce a valid environment within its retry budget.
class GenerationFailed : public Error {
 public:
  using Error::Error;
};

}  // namespace llmpoet
