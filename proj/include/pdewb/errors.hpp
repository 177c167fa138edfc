#pragma once

#include <stdexcept>
#include <string>

namespace pdewb {

/// Base class for every error raised by the workbench.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
  using Error::Error;
};

/// Input outside the mathematical domain of an operation (non-SPD tensor,
/// nonpositive permeability, ...).
class DomainError : public Error {
public:
  using Error::Error;
};

class SymmetryError : public Error {
public:
  using Error::Error;
};

class SingularSymbolError : public Error {
public:
  using Error::Error;
};

class UnsupportedSystemError : public Error {
public:
  using Error::Error;
};

class SolverError : public Error {
public:
  using Error::Error;
};

class PreconditionError : public Error {
public:
  using Error::Error;
};

class ShapeError : public Error {
public:
  using Error::Error;
};

/// Bad magic, unknown version or truncated payload.
class FormatError : public Error {
public:
  using Error::Error;
};

class ChecksumError : public FormatError {
public:
  using FormatError::FormatError;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// NaN/Inf encountered during training.
class NumericError : public Error {
public:
  using Error::Error;
};

class LayoutError : public Error {
public:
  using Error::Error;
};

class TapeError : public Error {
public:
  using Error::Error;
};

} // namespace pdewb
