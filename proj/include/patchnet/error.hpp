#pragma once

#include <stdexcept>
#include <string>

namespace patchnet {

// Error classes map 1:1 onto CLI exit codes; keep the numbering stable.
enum class ErrorCode : int {
  Ok = 0,
  Usage = 64,            // bad flags / missing required arguments
  BadInput = 65,         // malformed manifest, config or image file
  MissingFile = 66,      // unreadable or absent path
  InvariantViolation = 67,  // precondition or domain invariant failed
  VersionMismatch = 68,  // checkpoint format version not supported
  CorruptCheckpoint = 69,   // checksum or truncation detected
  Internal = 70,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  int exit_code() const noexcept { return static_cast<int>(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace patchnet
