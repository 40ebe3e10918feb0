#pragma once

#include <stdexcept>
#include <string>

namespace dvc {

// Base for all toolkit errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File or stream problems: missing headers, payload size mismatch, write failure.
struct IoError : Error {
  using Error::Error;
};

// Query outside the valid sampling/gradient domain.
struct DomainError : Error {
  using Error::Error;
};

// Subvolume with no usable texture (zero variance, singular Hessian).
struct DegenerateSubvolumeError : Error {
  using Error::Error;
};

// Every candidate of a search window fell outside the deformed volume.
struct OutOfBoundsError : Error {
  using Error::Error;
};

// Field repair impossible (all nodes flagged).
struct UnrecoverableFieldError : Error {
  using Error::Error;
};

// Accuracy index undefined: the two component gray means coincide.
struct UndefinedContrastError : Error {
  using Error::Error;
};

// Bad user-supplied configuration or arguments.
struct ConfigError : Error {
  using Error::Error;
};

}  // namespace dvc
