#pragma once

#include <stdexcept>
#include <string>

namespace tpgm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN/Inf encountered where finite values are required.
class NumericDomainError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input is numerically degenerate (e.g. rank deficient).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Configuration failed to parse or validate. The message names the key path.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace tpgm
