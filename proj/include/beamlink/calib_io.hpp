#pragma once

// Calibration file (JSON) and session recording (JSON lines) formats.

#include <filesystem>
#include <optional>
#include <string>

#include "beamlink/calib.hpp"

namespace beamlink::calib {

inline constexpr int kCalibrationSchemaVersion = 1;

struct CalibrationFile {
  SteeringCalibration calibration;
  std::optional<geom::StereoRig> stereo;  // stereo model the calibration was made with
};

/// Doubles are written in shortest round-trip form, so read(write(x)) == x bit for bit.
std::string calibration_to_json(const CalibrationFile& file);
CalibrationFile calibration_from_json(const std::string& text);  // throws ParseError

void write_calibration(const CalibrationFile& file, const std::filesystem::path& path);
CalibrationFile read_calibration(const std::filesystem::path& path);

/// First line is the stereo rig; each later line is one observation.
void write_session(const CalibrationSession& session, const std::filesystem::path& path);
CalibrationSession read_session(const std::filesystem::path& path);  // throws ParseError

}  // namespace beamlink::calib
