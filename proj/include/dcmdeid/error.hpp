#pragma once

#include <stdexcept>
#include <string>

namespace dcmdeid {

enum class ErrorCode {
  MissingMagic,
  TruncatedElement,
  UnsupportedTransferSyntax,
  OddLengthValue,
  SchemaError,
  UnknownActionKind,
  DuplicateTagRule,
  NotPrivate,
  MissingCreator,
  DuplicateKey,
  InvalidUID,
  EmptyID,
  UnparseableDate,
  IoError,
  RemoteUnavailable,
  SpanOutOfBounds,
  EmptyWhitelist,
  CompressedPixelData,
  InconsistentDimensions,
  MissingDetections,
  InvalidBox,
  SpecError,
  MissingOutputFile,
  InvalidConfig,
};

const char* to_string(ErrorCode code) noexcept;

/// Single exception type for the toolkit; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace dcmdeid
