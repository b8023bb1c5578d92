#include "ppsam/error.hpp"

namespace ppsam {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::DegenerateBox: return "DegenerateBox";
    case ErrorCode::InvalidBox: return "InvalidBox";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyRuns: return "EmptyRuns";
    case ErrorCode::MissingPair: return "MissingPair";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::OverlappingSplit: return "OverlappingSplit";
    case ErrorCode::IncompleteSplit: return "IncompleteSplit";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::InvalidPrompt: return "InvalidPrompt";
    case ErrorCode::UnsupportedBackend: return "UnsupportedBackend";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::AllFrozen: return "AllFrozen";
    case ErrorCode::EmptyTrainSet: return "EmptyTrainSet";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::EmptyTestSet: return "EmptyTestSet";
    case ErrorCode::UnknownKind: return "UnknownKind";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::MissingExperiment: return "MissingExperiment";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::UnknownKind:
    case ErrorCode::MissingExperiment:
    case ErrorCode::AllFrozen:
    case ErrorCode::UnsupportedBackend:
      return ErrorCategory::Usage;
    case ErrorCode::EmptyMask:
    case ErrorCode::MissingPair:
    case ErrorCode::EmptyDataset:
    case ErrorCode::UnknownId:
    case ErrorCode::OverlappingSplit:
    case ErrorCode::IncompleteSplit:
    case ErrorCode::InsufficientData:
    case ErrorCode::CorruptFile:
    case ErrorCode::EmptyTrainSet:
    case ErrorCode::EmptyTestSet:
    case ErrorCode::Io:
      return ErrorCategory::Data;
    default:
      return ErrorCategory::Runtime;
  }
}

}  // namespace ppsam
