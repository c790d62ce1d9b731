#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace edgefleet {

enum class ErrorCode {
  kMalformedField,
  kMissingField,
  kInsufficientData,
  kStorageFailure,
  kUnknownModelVersion,
  kEmptyInput,
  kSingularSystem,
  kLengthMismatch,
  kFormatVersionMismatch,
  kCorruptArtifact,
  kBrokerClosed,
  kWildcardInPublish,
  kInvalidTopic,
  kDecodeError,
  kArtifactVerificationFailed,
  kUnknownVersion,
  kUnknownDevice,
  kConfigError,
  kInvalidArgument,
};

std::string_view to_string(ErrorCode code);

/// Every failure surfaced by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace edgefleet
