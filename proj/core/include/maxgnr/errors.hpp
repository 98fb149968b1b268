#pragma once

#include <stdexcept>
#include <string>

namespace maxgnr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Vector or sequence lengths do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A numeric argument lies outside its mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A configuration value violates its contract.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Unknown task id or key.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked on an object in the wrong state (e.g. uninitialized momentum).
class StateError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

}  // namespace maxgnr
