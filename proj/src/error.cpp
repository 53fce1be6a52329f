#include "arr/error.hpp"

namespace arr {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kMalformedRecord: return "malformed_record";
    case ErrorKind::kDuplicateId: return "duplicate_id";
    case ErrorKind::kEmptyCorpus: return "empty_corpus";
    case ErrorKind::kBadMagic: return "bad_magic";
    case ErrorKind::kTruncated: return "truncated";
    case ErrorKind::kConsistency: return "consistency";
    case ErrorKind::kDimensionMismatch: return "dimension_mismatch";
    case ErrorKind::kTransport: return "transport";
    case ErrorKind::kHttpStatus: return "http_status";
    case ErrorKind::kCountMismatch: return "count_mismatch";
    case ErrorKind::kMalformedResponse: return "malformed_response";
    case ErrorKind::kEmptyResponse: return "empty_response";
    case ErrorKind::kBudgetExceeded: return "budget_exceeded";
    case ErrorKind::kConfig: return "config";
  }
  return "unknown";
}

}  // namespace arr
