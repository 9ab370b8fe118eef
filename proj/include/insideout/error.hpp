#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace insideout {

// Error categories. The numeric values are part of the C API (io_status).
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kBehindCamera = 2,
  kDegenerateGeometry = 3,
  kNoConvergence = 4,
  kInsufficientData = 5,
  kUnobservable = 6,
  kInitFailure = 7,
  kNoConsensus = 8,
  kOutOfRange = 9,
  kEmptyVolume = 10,
  kIncompleteChain = 11,
  kIo = 12,
  kParse = 13,
  kInternal = 14,
};

/// Short snake-case category name, used in CLI error lines.
std::string_view error_category_name(ErrorCode code);

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

}  // namespace insideout
