#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tsearch {

enum class ErrorCode {
  kInvalidArgument,
  kInfeasibleGeometry,
  kInsufficientData,
  kCorruptFile,
  kVersionMismatch,
  kShapeMismatch,
  kConfig,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Library-wide exception. Every failure the library reports carries a code
/// so the command-line layer can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tsearch
