#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace voxmed {

// Every failure surfaced by the library carries one of these codes. The
// service and the CLI report the code name verbatim.
enum class ErrorCode {
  // audio_io
  MalformedHeader,
  UnsupportedEncoding,
  TruncatedData,
  InvalidSample,
  InvalidRate,
  DurationExceeded,
  // dsp_features
  RateMismatch,
  ChannelMismatch,
  InvalidStd,
  // embedding
  ModelFileMissing,
  ShapeMismatch,
  BackendFailure,
  CacheMiss,
  DimMismatch,
  // classifier / training
  InvalidArch,
  EmptyInput,
  FormatError,
  VersionMismatch,
  DegenerateDataset,
  // dataset_icbhi
  BadFilename,
  BadPatientId,
  ParseError,
  DuplicatePatient,
  EmptyDataset,
  MissingDiagnosis,
  // evaluation
  LabelOutOfRange,
  EmptyMatrix,
  // service / cli
  UnknownDisease,
  InvalidConfig,
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  std::string_view code_name() const { return to_string(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace voxmed
