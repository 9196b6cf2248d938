#pragma once

#include <stdexcept>
#include <string>

namespace asf {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/axis mismatches between tensors.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf detected, or values out of a required numeric range.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API contract violation (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

// On-disk format violations (bad magic, truncation, ...).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Invalid run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Invalid input data (e.g. non-binary label matrix).
class DataError : public Error {
 public:
  using Error::Error;
};

// Training diverged (non-finite loss).
class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace asf
