#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace arr {

enum class ErrorKind {
  kInvalidArgument,
  kIo,
  kMalformedRecord,
  kDuplicateId,
  kEmptyCorpus,
  kBadMagic,
  kTruncated,
  kConsistency,
  kDimensionMismatch,
  kTransport,
  kHttpStatus,
  kCountMismatch,
  kMalformedResponse,
  kEmptyResponse,
  kBudgetExceeded,
  kConfig,
};

std::string_view to_string(ErrorKind kind);

/// Base error for everything thrown by the library. The kind lets callers
/// (and tests) distinguish failure classes without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace arr
