#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace optchain {

enum class ErrorKind {
  // tan
  kUnknownParent,
  kDuplicateId,
  kZeroWindow,
  // t2s
  kMissingParentScore,
  kZeroOutDegree,
  kDoubleCommit,
  kBadShardIndex,
  kStaleQuery,
  kBadCheckpoint,
  // l2s
  kNegativeTime,
  kEmptyProofSet,
  kNonPositiveRate,
  // placement
  kMissingAssignment,
  // ingest
  kParseError,
  kForwardReference,
  kBadHeader,
  kDuplicateHash,
  // shared
  kConfigInvalid,
  kIo,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kUnknownParent: return "UnknownParent";
    case ErrorKind::kDuplicateId: return "DuplicateId";
    case ErrorKind::kZeroWindow: return "ZeroWindow";
    case ErrorKind::kMissingParentScore: return "MissingParentScore";
    case ErrorKind::kZeroOutDegree: return "ZeroOutDegree";
    case ErrorKind::kDoubleCommit: return "DoubleCommit";
    case ErrorKind::kBadShardIndex: return "BadShardIndex";
    case ErrorKind::kStaleQuery: return "StaleQuery";
    case ErrorKind::kBadCheckpoint: return "BadCheckpoint";
    case ErrorKind::kNegativeTime: return "NegativeTime";
    case ErrorKind::kEmptyProofSet: return "EmptyProofSet";
    case ErrorKind::kNonPositiveRate: return "NonPositiveRate";
    case ErrorKind::kMissingAssignment: return "MissingAssignment";
    case ErrorKind::kParseError: return "ParseError";
    case ErrorKind::kForwardReference: return "ForwardReference";
    case ErrorKind::kBadHeader: return "BadHeader";
    case ErrorKind::kDuplicateHash: return "DuplicateHash";
    case ErrorKind::kConfigInvalid: return "ConfigInvalid";
    case ErrorKind::kIo: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  bool is_config_error() const noexcept {
    return kind_ == ErrorKind::kConfigInvalid || kind_ == ErrorKind::kZeroWindow ||
           kind_ == ErrorKind::kBadShardIndex;
  }

 private:
  ErrorKind kind_;
};

}  // namespace optchain
