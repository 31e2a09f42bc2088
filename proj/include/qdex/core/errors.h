#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qdex {

// Coarse error classes. The service layer maps these onto HTTP statuses and
// the CLI onto exit codes.
enum class ErrorCode {
  kInvalidArgument,   // malformed input, failed invariant (422)
  kNotFound,          // unknown session / field / instance (404 or 422)
  kConflict,          // operation not valid in the current phase (409)
  kUnusableName,      // name empty after normalization
  kMissingBinding,    // prompt template binding absent
  kTransport,         // provider unreachable or returned an error
  kContractViolation, // model output failed its response contract
  kConfig,            // provider misconfigured (e.g. missing API key)
  kIo,                // filesystem / serialization failure
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace qdex
