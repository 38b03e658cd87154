#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace forge {

/// Every failure the library reports carries a stable machine-readable code
/// (e.g. "service_unavailable", "no_json_array") next to the human message.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(code + ": " + message), code_(std::move(code)) {}
  explicit Error(std::string code) : std::runtime_error(code), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

/// Raised by service backends for failures worth retrying (timeouts, 5xx).
class TransientError : public Error {
 public:
  using Error::Error;
};

}  // namespace forge
