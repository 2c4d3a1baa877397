#pragma once

#include <stdexcept>
#include <string>

namespace mitia {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A referenced file is missing or unreadable.
class LoadError : public Error {
 public:
  using Error::Error;
};

// Input violates a documented precondition (shape, range, partition).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A run is misconfigured, e.g. a prerequisite checkpoint is missing.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace mitia
