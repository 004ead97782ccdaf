#pragma once

#include <stdexcept>
#include <string>

namespace gcr {

// Error taxonomy mirrors the CLI exit codes: validation -> 2, numeric -> 3.
enum class ErrorKind { validation, numeric };

class GcrError : public std::runtime_error {
 public:
  GcrError(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline GcrError validation_error(const std::string& msg) {
  return GcrError(ErrorKind::validation, msg);
}

inline GcrError numeric_error(const std::string& msg) {
  return GcrError(ErrorKind::numeric, msg);
}

}  // namespace gcr
