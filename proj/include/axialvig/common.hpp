#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace axialvig {

using Index = std::int64_t;

// Base for all library errors. CLI maps these onto stable exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape / dimension mismatches; messages name the offending axis.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration values (bad groups, unknown model name, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated files (GVT tensors, weight containers, configs).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Autodiff tape misuse (foreign node ids, non-scalar loss, ...).
class TapeError : public Error {
 public:
  using Error::Error;
};

enum class Axis { height, width };

inline const char* axis_name(Axis a) {
  return a == Axis::height ? "height" : "width";
}

}  // namespace axialvig
