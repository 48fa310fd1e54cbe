#pragma once

// Three-stage steering calibration: stereo localization of scan points,
// device pose (R, T) recovery, and drive-signal mapping regression.

#include <array>
#include <vector>

#include "beamlink/error.hpp"
#include "beamlink/geom.hpp"
#include "beamlink/optosim.hpp"

namespace beamlink::calib {

using geom::Mat3;
using geom::Vec2;
using geom::Vec3;
using optosim::Angles;
using optosim::Drive;

/// One detected beam spot: the commanded drive and its stereo pixels.
struct Observation {
  Drive drive;
  Vec2 pixel_left = Vec2::Zero();
  Vec2 pixel_right = Vec2::Zero();
};

/// Scans recorded with the board held at one position.
struct BoardScans {
  std::vector<Observation> x_scan;  // drives (a_i, 0)
  std::vector<Observation> y_scan;  // drives (0, b_i)
};

struct CalibrationSession {
  geom::StereoRig rig;
  std::vector<BoardScans> boards;
  std::vector<Observation> spiral;  // board fixed, drives along a spiral
};

struct CalibTolerances {
  geom::GeomTolerances geom;
  double max_axis_dot = 0.05;  // pre-projection |x.y|, |x.z|, |y.z|
  std::size_t min_boards = 2;
  std::size_t min_spiral = 9;
};

/// Degree-2 bivariate drive mapping. Coefficient k = 3*i + j multiplies
/// alpha^i * beta^j.
struct MappingModel {
  std::array<double, 9> m_a{};
  std::array<double, 9> m_b{};
  double fit_residual_rms = 0.0;  // drive units, over both fits

  Drive evaluate(const Angles& angles) const;
};

struct RotationDiagnostics {
  double surface_xz_rms = 0.0;
  double surface_yz_rms = 0.0;
  double axis_line_rms = 0.0;
  double max_axis_dot = 0.0;
  std::size_t axis_samples = 0;
};

struct RotationResult {
  Mat3 R = Mat3::Identity();
  geom::Vec3 axis_point = Vec3::Zero();
  RotationDiagnostics diagnostics;
};

struct TranslationResult {
  Vec3 T = Vec3::Zero();
  std::size_t groups = 0;
  double line_fit_rms = 0.0;    // mean TLS residual of the virtual beams
  double bundle_rms = 0.0;      // RMS distance of the beams to T
};

struct Diagnostics {
  RotationDiagnostics rotation;
  std::size_t beam_groups = 0;
  double beam_line_rms = 0.0;
  double beam_bundle_rms = 0.0;
  double mapping_rms = 0.0;
};

struct SteeringCalibration {
  geom::SteeringPose pose;
  MappingModel mapping;
  Diagnostics diagnostics;
};

/// Throws PreconditionViolated unless the session has >= 2 board positions
/// and >= 9 spiral samples.
void validate_session(const CalibrationSession& session, const CalibTolerances& tol = {});

RotationResult recover_rotation(const CalibrationSession& session, const CalibTolerances& tol = {});

TranslationResult recover_translation(const CalibrationSession& session, const Mat3& R,
                                      const CalibTolerances& tol = {});

MappingModel fit_mapping(const CalibrationSession& session, const geom::SteeringPose& pose,
                         const CalibTolerances& tol = {});

/// Failure of one calibration stage: 1 stereo localization, 2 pose, 3 mapping.
class StageFailure : public Error {
 public:
  StageFailure(int stage, const Error& cause) : Error(cause.code(), cause.message()), stage_(stage) {}
  int stage() const noexcept { return stage_; }

 private:
  int stage_;
};

/// Runs every stage; failures are rethrown as StageFailure.
SteeringCalibration calibrate(const CalibrationSession& session, const CalibTolerances& tol = {});

/// Device-frame angles of a world point; throws BehindDevice.
Angles target_angles(const geom::SteeringPose& pose, const Vec3& target);

/// Drive that points the beam at `target`; throws BehindDevice or DriveOutOfRange.
Drive steer_to_point(const SteeringCalibration& calibration, const Vec3& target);

}  // namespace beamlink::calib
