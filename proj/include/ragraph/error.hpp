#pragma once

#include <stdexcept>
#include <string>

namespace ragraph {

/// Base of every error thrown by the library. The CLI maps the subclasses
/// onto exit codes (input 2, consistency 3, numeric 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class NotFound : public InputError {
 public:
  using InputError::InputError;
};

class InvalidInput : public InputError {
 public:
  using InputError::InputError;
};

class FormatError : public InputError {
 public:
  using InputError::InputError;
};

class EmptyStore : public InputError {
 public:
  EmptyStore() : InputError("store has no entries") {}
};

/// Store, config and data disagree (hash mismatch and the like).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ragraph
