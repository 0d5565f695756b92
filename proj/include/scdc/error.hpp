#pragma once

#include <stdexcept>
#include <string>

namespace scdc {

// Root of every error raised by the library. Subclasses name the failure
// category so callers (and the CLI exit-code mapping) can dispatch on it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

// Factorization failure or loss of definiteness.
class LinAlgError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ContractError : public Error {
 public:
  using Error::Error;
};

// Non-finite objective, gradient, or network output during training.
class TrainingDivergence : public Error {
 public:
  using Error::Error;
};

// A global update left the variational parameters outside their domain.
class StepRejected : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace scdc
