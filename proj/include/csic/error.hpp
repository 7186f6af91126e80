#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace csic {

enum class ErrorKind : std::uint8_t {
  kShape,      // tensor or layer dimensions disagree
  kConfig,     // invalid configuration or argument value
  kFormat,     // malformed dataset / model file
  kIo,         // filesystem failure
  kInvariant,  // internal invariant violated
};

const char* to_string(ErrorKind kind) noexcept;

/// Structured error raised by every module. `kind()` decides the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Format error that points at the byte offset where parsing stopped.
class FormatError : public Error {
 public:
  FormatError(std::uint64_t offset, const std::string& message)
      : Error(ErrorKind::kFormat,
              message + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const char* message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace csic
