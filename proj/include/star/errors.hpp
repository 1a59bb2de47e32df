#pragma once

#include <stdexcept>
#include <string>

namespace star {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not line up (matmul inner dims, concat extents, ...).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an operation's precondition (odd T, non-scalar loss, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration value (sigma <= 0, D % H != 0, indivisible frame size).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Inputs are individually well formed but inconsistent with each other.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN/Inf or failed a numerical check.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace star
