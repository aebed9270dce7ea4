#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace prx {

enum class ErrorCode {
  InvalidArgument,
  SchemaError,
  ValidationFailed,
  MalformedCode,
  UnparseableTimestamp,
  IoError,
  FormatVersionMismatch,
  DimensionMismatch,
  DuplicateId,
  EmptyCase,
  EmbedServiceError,
  BudgetTooSmall,
  GeneratorServiceError,
  GeneratorParseError,
  EmptyPrecedent,
  MixedTasks,
  SingleClass,
  MissingRetrieval,
  NotFound,
  Internal,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a code; `path()` names the
// offending field for schema and validation failures.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string path = {})
      : std::runtime_error(message), code_(code), path_(std::move(path)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& path() const noexcept { return path_; }

 private:
  ErrorCode code_;
  std::string path_;
};

}  // namespace prx
