#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pstream {

enum class ErrorCode {
  kShapeMismatch,
  kNonFinite,
  kInvalidArgument,
  kStaleCache,
  kConfig,
  kIo,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kDimInconsistent,
  kInvalidRecord,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace pstream
