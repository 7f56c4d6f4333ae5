#include "voxmed/error.hpp"

namespace voxmed {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::UnsupportedEncoding: return "UnsupportedEncoding";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::InvalidSample: return "InvalidSample";
    case ErrorCode::InvalidRate: return "InvalidRate";
    case ErrorCode::DurationExceeded: return "DurationExceeded";
    case ErrorCode::RateMismatch: return "RateMismatch";
    case ErrorCode::ChannelMismatch: return "ChannelMismatch";
    case ErrorCode::InvalidStd: return "InvalidStd";
    case ErrorCode::ModelFileMissing: return "ModelFileMissing";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BackendFailure: return "BackendFailure";
    case ErrorCode::CacheMiss: return "CacheMiss";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::InvalidArch: return "InvalidArch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::DegenerateDataset: return "DegenerateDataset";
    case ErrorCode::BadFilename: return "BadFilename";
    case ErrorCode::BadPatientId: return "BadPatientId";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DuplicatePatient: return "DuplicatePatient";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::MissingDiagnosis: return "MissingDiagnosis";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::UnknownDisease: return "UnknownDisease";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace voxmed
