#include "abase/error.hpp"

namespace abase {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::permission: return "permission";
    case ErrorKind::not_found: return "not-found";
    case ErrorKind::state: return "state";
    case ErrorKind::conflict: return "conflict";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::validation: return 1;
    case ErrorKind::permission: return 3;
    case ErrorKind::not_found: return 4;
    case ErrorKind::state:
    case ErrorKind::conflict: return 5;
    case ErrorKind::io: return 1;
  }
  return 1;
}

int http_status(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::validation: return 400;
    case ErrorKind::permission: return 403;
    case ErrorKind::not_found: return 404;
    case ErrorKind::state:
    case ErrorKind::conflict: return 409;
    case ErrorKind::io: return 500;
  }
  return 500;
}

}  // namespace abase
