#pragma once

#include <stdexcept>
#include <string>

namespace freconv {

// Base class for all library errors. Subclasses categorize the failure so
// callers (notably the CLI) can map user-caused problems to exit code 1 and
// internal invariant breaches to exit code 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A tensor/operation shape constraint was violated.
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

// An operation parameter is out of its legal domain.
class ParamError : public Error {
 public:
  explicit ParamError(const std::string& msg) : Error("parameter error: " + msg) {}
};

// A layer/module configuration is self-inconsistent or unsatisfiable.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("configuration error: " + msg) {}
};

// A serialized artifact (FRTN file, arch JSON, checkpoint) is malformed.
// Carries the byte offset of the first offending datum where applicable.
class FormatError : public Error {
 public:
  FormatError(const std::string& msg, long long byte_offset = -1)
      : Error(byte_offset >= 0
                  ? "format error at byte " + std::to_string(byte_offset) + ": " + msg
                  : "format error: " + msg),
        offset(byte_offset) {}

  long long offset = -1;
};

// Requested allocation exceeds the platform index type.
class SizeOverflowError : public Error {
 public:
  explicit SizeOverflowError(const std::string& msg) : Error("size overflow: " + msg) {}
};

}  // namespace freconv
