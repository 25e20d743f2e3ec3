#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace abase {

/// Failure classes surfaced to callers. The gateway maps each to a distinct
/// HTTP status and CLI exit code.
enum class ErrorKind {
  validation,
  permission,
  not_found,
  state,
  conflict,
  io,
};

const char* to_string(ErrorKind kind) noexcept;
int exit_code(ErrorKind kind) noexcept;
int http_status(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  Error(ErrorKind kind, const std::string& message, std::vector<std::string> details)
      : std::runtime_error(message), kind_(kind), details_(std::move(details)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  ErrorKind kind_;
  std::vector<std::string> details_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace abase
