#include "tsearch/error.hpp"

namespace tsearch {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInfeasibleGeometry: return "infeasible-geometry";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kCorruptFile: return "corrupt-file";
    case ErrorCode::kVersionMismatch: return "version-mismatch";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

}  // namespace tsearch
