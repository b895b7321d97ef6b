#pragma once

#include <stdexcept>
#include <string>

namespace pneumo {

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not line up; message names both shapes.
struct DimensionError : Error {
  using Error::Error;
};

/// A softmax row whose entries are all masked out.
struct DegenerateRowError : Error {
  using Error::Error;
};

/// Invalid or unsupported configuration (unknown key, bad value).
struct ConfigError : Error {
  using Error::Error;
};

/// On-disk format problems: bad magic, version mismatch, truncation.
struct IoError : Error {
  using Error::Error;
};

/// Numerical verification failure (gradient check, non-finite loss).
struct VerifyError : Error {
  using Error::Error;
};

}  // namespace pneumo
