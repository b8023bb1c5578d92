#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ppsam {

enum class ErrorCode {
  // geometry
  EmptyMask,
  DegenerateBox,
  InvalidBox,
  // metrics
  ShapeMismatch,
  EmptyRuns,
  // data
  MissingPair,
  EmptyDataset,
  UnknownId,
  OverlappingSplit,
  IncompleteSplit,
  InsufficientData,
  CorruptFile,
  // segmenter
  InvalidPrompt,
  UnsupportedBackend,
  BackendUnavailable,
  // finetune
  AllFrozen,
  EmptyTrainSet,
  Diverged,
  // sweep
  EmptyTestSet,
  UnknownKind,
  // cli
  ConfigError,
  MissingExperiment,
  Io,
};

/// Coarse class of an error; drives the CLI exit code.
enum class ErrorCategory { Usage = 1, Data = 2, Runtime = 3 };

std::string_view to_string(ErrorCode code);
ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

}  // namespace ppsam
