#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace pixlab {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or domain mismatch between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid argument or configuration value. `path` is a JSON pointer when the
// value came from a config document, empty otherwise.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg, std::string path = {})
      : Error(path.empty() ? msg : path + ": " + msg), path_(std::move(path)) {}

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// File system failures: missing files, unwritable outputs.
class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed binary file. Carries the byte offset where decoding failed.
class ParseError : public IoError {
 public:
  ParseError(const std::string& msg, std::size_t offset)
      : IoError(msg + " (at byte offset " + std::to_string(offset) + ")"),
        detail_(msg),
        offset_(offset) {}

  std::size_t offset() const { return offset_; }
  // Message without the offset suffix.
  const std::string& detail() const { return detail_; }

 private:
  std::string detail_;
  std::size_t offset_;
};

}  // namespace pixlab
