#pragma once

#include <stdexcept>
#include <string>

namespace sonamatch {

// Base class for everything this library throws on purpose. Anything else
// escaping (std::logic_error, bad_alloc, ...) is a bug, not a usage error.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer shape disagreement. Message names both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A value is outside the documented domain of an operation.
class InputError : public Error {
 public:
  using Error::Error;
};

// Inconsistent or out-of-range configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A file exists but its contents do not parse. Messages carry the byte
// offset or line number of the first defect.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Rejection sampling exhausted its attempt budget.
class SamplingError : public Error {
 public:
  using Error::Error;
};

// Filesystem-level failure: missing path, unwritable directory, short write.
class IoError : public Error {
 public:
  using Error::Error;
};

// Input is valid in shape but numerically unusable (e.g. a constant patch
// where a correlation needs variance).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

}  // namespace sonamatch
