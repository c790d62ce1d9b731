#include "edgefleet/error.hpp"

namespace edgefleet {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedField: return "MalformedField";
    case ErrorCode::kMissingField: return "MissingField";
    case ErrorCode::kInsufficientData: return "InsufficientData";
    case ErrorCode::kStorageFailure: return "StorageFailure";
    case ErrorCode::kUnknownModelVersion: return "UnknownModelVersion";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kSingularSystem: return "SingularSystem";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kFormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::kCorruptArtifact: return "CorruptArtifact";
    case ErrorCode::kBrokerClosed: return "BrokerClosed";
    case ErrorCode::kWildcardInPublish: return "WildcardInPublish";
    case ErrorCode::kInvalidTopic: return "InvalidTopic";
    case ErrorCode::kDecodeError: return "DecodeError";
    case ErrorCode::kArtifactVerificationFailed: return "ArtifactVerificationFailed";
    case ErrorCode::kUnknownVersion: return "UnknownVersion";
    case ErrorCode::kUnknownDevice: return "UnknownDevice";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace edgefleet
