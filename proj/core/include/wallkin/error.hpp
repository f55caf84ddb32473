#pragma once

#include <stdexcept>
#include <string>

namespace wallkin {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input: violated preconditions, invalid parameters, malformed config.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// File system and format problems.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure at runtime (non-finite objective, non-convergence, ...).
class NumericError : public Error {
 public:
  using Error::Error;
};

[[noreturn]] void throw_validation(const std::string& what);
[[noreturn]] void throw_io(const std::string& what);
[[noreturn]] void throw_numeric(const std::string& what);

}  // namespace wallkin
