#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cbgt {

// Operation called on an object that is not in a state that supports it,
// e.g. reading out an accumulator before any evidence was consumed.
class InvalidState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Broken internal bookkeeping (mismatched optimizer state, missing tape).
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Malformed on-disk data. Carries the offending file and byte offset.
class FormatError : public std::runtime_error {
 public:
  FormatError(std::string file, std::uint64_t offset, const std::string& what)
      : std::runtime_error(file + " @ byte " + std::to_string(offset) + ": " + what),
        file_(std::move(file)),
        offset_(offset) {}

  const std::string& file() const noexcept { return file_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::string file_;
  std::uint64_t offset_;
};

// User-facing configuration problem; the CLI maps it to exit code 1.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class NotConvergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cbgt
