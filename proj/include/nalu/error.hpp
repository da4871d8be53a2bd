#pragma once

#include <stdexcept>
#include <string>

namespace nalu {

// Base class for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or rank mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced by an operation, or a domain violation such as log(x <= 0).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Unreadable/unwritable files and malformed on-disk data.
class IoError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values or unknown enum names.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Argument outside an operation's domain (empty input, sigma <= 0, dot
// outside the image, ...).
class ValueError : public Error {
 public:
  using Error::Error;
};

}  // namespace nalu
