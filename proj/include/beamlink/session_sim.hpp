#pragma once

// Generates calibration sessions from the virtual rig.

#include <cstdint>
#include <vector>

#include "beamlink/calib.hpp"
#include "beamlink/optosim.hpp"
#include "beamlink/tracker.hpp"

namespace beamlink::calib {

enum class ScanImaging {
  Analytic,  // exact projections plus gaussian pixel noise
  Rendered,  // render the laser spot and detect it with the tag tracker
};

struct SessionSimConfig {
  std::vector<double> board_depths{0.7, 1.0, 1.3};
  std::vector<double> board_tilts_deg{3.0, -4.0, 5.0};
  int axis_drives = 11;
  double axis_drive_span = 0.5;  // drives run over [-span, span]
  int spiral_samples = 64;
  double spiral_radius = 0.5;
  double spiral_turns = 5.0;
  double spiral_board_depth = 1.0;
  double spiral_board_tilt_deg = 2.0;
  double pixel_noise_px = 0.0;
  // Relative focal-length error of the stereo model handed to calibration.
  double focal_perturbation = 0.0;
  ScanImaging imaging = ScanImaging::Analytic;
  int render_window_px = 96;
  double scan_ambient_lux = 600.0;
};

std::vector<Drive> axis_scan_drives(const SessionSimConfig& cfg, bool x_axis);
std::vector<Drive> spiral_drives(const SessionSimConfig& cfg);

struct SimulatedSession {
  CalibrationSession session;
  std::size_t missed = 0;  // samples flagged BeamMissesBoard and dropped
};

SimulatedSession simulate_session(const geom::StereoRig& truth_rig, optosim::SteeringDevice& device,
                                  const SessionSimConfig& cfg, std::uint64_t seed,
                                  const optosim::ImagingConfig& imaging = {},
                                  const optosim::LaserBeam& beam = {},
                                  const tracker::TrackerConfig& tracker_cfg = {});

}  // namespace beamlink::calib
