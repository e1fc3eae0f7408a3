#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace metricforge {

enum class ErrorCode {
  kIo = 1,
  kDuplicateName,
  kLengthMismatch,
  kBadMagic,
  kUnsupportedVersion,
  kChecksumMismatch,
  kTruncated,
  kMalformedHeader,
  kUnknownTensor,
  kMissingTensor,
  kDuplicateToken,
  kBadSpecials,
  kEmptyVocab,
  kMissingField,
  kIdOutOfRange,
  kSequenceTooLong,
  kEmptyRow,
  kMissingEmbedding,
  kCountMismatch,
  kKindMismatch,
  kNotFound,
  kEmptyReport,
  kInvalidConfig,
  kUnknownName,
  kDownload,
  kHttpStatus,
  kLockTimeout,
  kOffline,
  kColumnCount,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "io";
    case ErrorCode::kDuplicateName: return "duplicate-name";
    case ErrorCode::kLengthMismatch: return "length-mismatch";
    case ErrorCode::kBadMagic: return "bad-magic";
    case ErrorCode::kUnsupportedVersion: return "unsupported-version";
    case ErrorCode::kChecksumMismatch: return "checksum-mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kMalformedHeader: return "malformed-header";
    case ErrorCode::kUnknownTensor: return "unknown-tensor";
    case ErrorCode::kMissingTensor: return "missing-tensor";
    case ErrorCode::kDuplicateToken: return "duplicate-token";
    case ErrorCode::kBadSpecials: return "bad-specials";
    case ErrorCode::kEmptyVocab: return "empty-vocab";
    case ErrorCode::kMissingField: return "missing-field";
    case ErrorCode::kIdOutOfRange: return "id-out-of-range";
    case ErrorCode::kSequenceTooLong: return "sequence-too-long";
    case ErrorCode::kEmptyRow: return "empty-row";
    case ErrorCode::kMissingEmbedding: return "missing-embedding";
    case ErrorCode::kCountMismatch: return "count-mismatch";
    case ErrorCode::kKindMismatch: return "kind-mismatch";
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kEmptyReport: return "empty-report";
    case ErrorCode::kInvalidConfig: return "invalid-config";
    case ErrorCode::kUnknownName: return "unknown-name";
    case ErrorCode::kDownload: return "download";
    case ErrorCode::kHttpStatus: return "http-status";
    case ErrorCode::kLockTimeout: return "lock-timeout";
    case ErrorCode::kOffline: return "offline";
    case ErrorCode::kColumnCount: return "column-count";
  }
  return "unknown";
}

/// Every failure raised by the library carries a code so callers (the CLI
/// exit-code mapping, the C boundary) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace metricforge
