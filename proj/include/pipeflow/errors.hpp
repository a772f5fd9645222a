// pipeflow: error taxonomy shared by all modules.
#pragma once

#include <stdexcept>
#include <string>

namespace pipeflow {

// Every failure mode has a stable name so callers (CLI, tests) can branch on
// it without parsing message text.
enum class ErrorCode {
  // parameter / input validation
  NonFiniteParameter,
  BetaOutOfRange,
  NegativeEta,
  NegativeKappa,
  GammaNotAboveEtaSquared,
  KappaZero,
  InvalidGrid,
  GridTooCoarse,
  InvalidInitialState,
  IndexMismatch,
  InvalidAxis,
  UnknownKey,
  BadValue,
  MissingFile,
  IoFailure,
  // solver failures
  NoConvergence,
  ConvergedToWrongBasin,
  BoundaryTooClose,
  WindingNotInteger,
  IncompleteSpectrum,
  RankDeficiencyAmbiguous,
  GramSingular,
  ProjectionResidualTooLarge,
  StepUnstable,
  NonPositiveEnergy,
};

inline const char* error_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::NonFiniteParameter: return "NonFiniteParameter";
    case ErrorCode::BetaOutOfRange: return "BetaOutOfRange";
    case ErrorCode::NegativeEta: return "NegativeEta";
    case ErrorCode::NegativeKappa: return "NegativeKappa";
    case ErrorCode::GammaNotAboveEtaSquared: return "GammaNotAboveEtaSquared";
    case ErrorCode::KappaZero: return "KappaZero";
    case ErrorCode::InvalidGrid: return "InvalidGrid";
    case ErrorCode::GridTooCoarse: return "GridTooCoarse";
    case ErrorCode::InvalidInitialState: return "InvalidInitialState";
    case ErrorCode::IndexMismatch: return "IndexMismatch";
    case ErrorCode::InvalidAxis: return "InvalidAxis";
    case ErrorCode::UnknownKey: return "UnknownKey";
    case ErrorCode::BadValue: return "BadValue";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::ConvergedToWrongBasin: return "ConvergedToWrongBasin";
    case ErrorCode::BoundaryTooClose: return "BoundaryTooClose";
    case ErrorCode::WindingNotInteger: return "WindingNotInteger";
    case ErrorCode::IncompleteSpectrum: return "IncompleteSpectrum";
    case ErrorCode::RankDeficiencyAmbiguous: return "RankDeficiencyAmbiguous";
    case ErrorCode::GramSingular: return "GramSingular";
    case ErrorCode::ProjectionResidualTooLarge: return "ProjectionResidualTooLarge";
    case ErrorCode::StepUnstable: return "StepUnstable";
    case ErrorCode::NonPositiveEnergy: return "NonPositiveEnergy";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_name(code)) + ": " + detail), code_(code) {}
  ErrorCode code() const { return code_; }
  // Input-class errors are the caller's fault; the rest are solver failures.
  bool is_input_error() const {
    switch (code_) {
      case ErrorCode::NonFiniteParameter:
      case ErrorCode::BetaOutOfRange:
      case ErrorCode::NegativeEta:
      case ErrorCode::NegativeKappa:
      case ErrorCode::GammaNotAboveEtaSquared:
      case ErrorCode::KappaZero:
      case ErrorCode::InvalidGrid:
      case ErrorCode::GridTooCoarse:
      case ErrorCode::InvalidInitialState:
      case ErrorCode::IndexMismatch:
      case ErrorCode::InvalidAxis:
      case ErrorCode::UnknownKey:
      case ErrorCode::BadValue:
      case ErrorCode::MissingFile:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorCode code_;
};

}  // namespace pipeflow
