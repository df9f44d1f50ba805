#pragma once

#include <stdexcept>
#include <string>

namespace sween {

enum class ErrorKind {
  kInvalidParameter,
  kDimensionMismatch,
  kDomain,
  kEmptyInput,
  kGridMismatch,
  kIo,
  kFormat,
  kNumericFailure,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; `kind` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace sween
