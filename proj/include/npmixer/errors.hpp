// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace npmixer {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Out-of-range numeric parameter (dropout rate, level count, patch length).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Invalid or conflicting configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// Caller violated an API precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file.
class IngestionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values during training.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace npmixer
