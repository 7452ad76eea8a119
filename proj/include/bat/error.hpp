#pragma once

#include <stdexcept>
#include <string>

namespace bat {

// Base for every error raised by the library. The CLI exits with 3 on
// NumericalError and 2 on the others.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Simplex hit its iteration cap; never reinterpreted as a status.
class SolverUnresolved : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// Request exceeds a documented size guard.
class Refused : public Error {
 public:
  using Error::Error;
};

}  // namespace bat
