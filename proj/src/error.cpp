#include "dcmdeid/error.hpp"

namespace dcmdeid {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::MissingMagic: return "MissingMagic";
    case ErrorCode::TruncatedElement: return "TruncatedElement";
    case ErrorCode::UnsupportedTransferSyntax: return "UnsupportedTransferSyntax";
    case ErrorCode::OddLengthValue: return "OddLengthValue";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::UnknownActionKind: return "UnknownActionKind";
    case ErrorCode::DuplicateTagRule: return "DuplicateTagRule";
    case ErrorCode::NotPrivate: return "NotPrivate";
    case ErrorCode::MissingCreator: return "MissingCreator";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::InvalidUID: return "InvalidUID";
    case ErrorCode::EmptyID: return "EmptyID";
    case ErrorCode::UnparseableDate: return "UnparseableDate";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::RemoteUnavailable: return "RemoteUnavailable";
    case ErrorCode::SpanOutOfBounds: return "SpanOutOfBounds";
    case ErrorCode::EmptyWhitelist: return "EmptyWhitelist";
    case ErrorCode::CompressedPixelData: return "CompressedPixelData";
    case ErrorCode::InconsistentDimensions: return "InconsistentDimensions";
    case ErrorCode::MissingDetections: return "MissingDetections";
    case ErrorCode::InvalidBox: return "InvalidBox";
    case ErrorCode::SpecError: return "SpecError";
    case ErrorCode::MissingOutputFile: return "MissingOutputFile";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace dcmdeid
