#include "insideout/error.hpp"

namespace insideout {

std::string_view error_category_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kBehindCamera: return "behind_camera";
    case ErrorCode::kDegenerateGeometry: return "degenerate_geometry";
    case ErrorCode::kNoConvergence: return "no_convergence";
    case ErrorCode::kInsufficientData: return "insufficient_data";
    case ErrorCode::kUnobservable: return "unobservable";
    case ErrorCode::kInitFailure: return "init_failure";
    case ErrorCode::kNoConsensus: return "no_consensus";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kEmptyVolume: return "empty_volume";
    case ErrorCode::kIncompleteChain: return "incomplete_chain";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kInternal: return "internal";
  }
  return "unknown";
}

}  // namespace insideout
