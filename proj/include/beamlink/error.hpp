#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace beamlink {

enum class ErrorCode {
  // geom
  ParallelRays,
  OutOfBounds,
  Underdetermined,
  NoIntersection,
  IllConditioned,
  DegenerateInput,
  ParallelBundle,
  // optosim
  DriveOutOfRange,
  BeamMissesBoard,
  // calib
  PreconditionViolated,
  NonOrthogonalAxes,
  TooFewGroups,
  RankDeficient,
  BehindDevice,
  // tracker
  DegenerateHistogram,
  NoBlobs,
  // fsk
  BadDuration,
  UnknownSymbol,
  NyquistViolation,
  BelowMinimumRate,
  // runtime
  TrackingLost,
  UnreachablePoint,
  InvalidScenario,
  // io / config
  ParseError,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParallelRays: return "ParallelRays";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::Underdetermined: return "Underdetermined";
    case ErrorCode::NoIntersection: return "NoIntersection";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::ParallelBundle: return "ParallelBundle";
    case ErrorCode::DriveOutOfRange: return "DriveOutOfRange";
    case ErrorCode::BeamMissesBoard: return "BeamMissesBoard";
    case ErrorCode::PreconditionViolated: return "PreconditionViolated";
    case ErrorCode::NonOrthogonalAxes: return "NonOrthogonalAxes";
    case ErrorCode::TooFewGroups: return "TooFewGroups";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::BehindDevice: return "BehindDevice";
    case ErrorCode::DegenerateHistogram: return "DegenerateHistogram";
    case ErrorCode::NoBlobs: return "NoBlobs";
    case ErrorCode::BadDuration: return "BadDuration";
    case ErrorCode::UnknownSymbol: return "UnknownSymbol";
    case ErrorCode::NyquistViolation: return "NyquistViolation";
    case ErrorCode::BelowMinimumRate: return "BelowMinimumRate";
    case ErrorCode::TrackingLost: return "TrackingLost";
    case ErrorCode::UnreachablePoint: return "UnreachablePoint";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace beamlink
