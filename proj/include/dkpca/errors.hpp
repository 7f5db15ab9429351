#pragma once

#include <stdexcept>
#include <string>

namespace dkpca {

/// Base class for all dkpca errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an operation's inputs was violated.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed (non-convergence, ill-conditioning).
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// File could not be read or has a malformed structure.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Protocol-level violation (duplicate agent, missing partial, ...).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Wire bytes are structurally invalid (bad magic, version, tag).
class FormatError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

/// Wire bytes have the wrong length for their declared shape.
class LengthError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

/// Wire payload carries unusable values (NaN).
class DataError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

/// A distributed run failed to complete (timeout, agent failure).
class RunError : public Error {
 public:
  using Error::Error;
};

}  // namespace dkpca
