#pragma once

#include <stdexcept>
#include <string>

namespace lqa {

enum class ErrorCode {
  kInvalidArgument,
  kNotFound,
  kIo,
  kFormat,
  kMismatch,
  kInternal,
};

const char* ToString(ErrorCode code);

// All library failures surface as this exception. The CLI maps kInternal to
// exit code 3 and everything else to exit code 2.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace lqa
