#pragma once

#include <stdexcept>
#include <string>

namespace hsr {

// Bad arguments, shape mismatches, malformed configuration. CLI exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem / stream failures. CLI exit code 2.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Structurally bad file contents (wrong magic, unsupported version, ...).
class FormatError : public IoError {
 public:
  explicit FormatError(const std::string& msg) : IoError(msg) {}
};

// File ended before the payload announced by its header.
class ShortReadError : public IoError {
 public:
  explicit ShortReadError(const std::string& msg) : IoError(msg) {}
};

// Optimization produced non-finite values; last good checkpoint is retained.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hsr
