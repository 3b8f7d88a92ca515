#pragma once

#include <stdexcept>
#include <string>

namespace splatct {

// Base for everything the library throws. The CLI maps the subclasses onto
// exit codes (usage 2, parse 3, numerical 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A documented precondition was violated by the caller.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// A file or config could not be decoded.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or divergence during an iterative computation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw PreconditionError(message);
}

}  // namespace splatct
