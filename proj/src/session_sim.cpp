#include "beamlink/session_sim.hpp"

#include <cmath>
#include <numbers>

#include "beamlink/rng.hpp"

namespace beamlink::calib {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;
}

std::vector<Drive> axis_scan_drives(const SessionSimConfig& cfg, bool x_axis) {
  std::vector<Drive> out;
  const int n = std::max(2, cfg.axis_drives);
  for (int i = 0; i < n; ++i) {
    const double v = -cfg.axis_drive_span + 2.0 * cfg.axis_drive_span * i / (n - 1);
    out.push_back(x_axis ? Drive{v, 0.0} : Drive{0.0, v});
  }
  return out;
}

std::vector<Drive> spiral_drives(const SessionSimConfig& cfg) {
  std::vector<Drive> out;
  const int n = cfg.spiral_samples;
  for (int k = 0; k < n; ++k) {
    const double r = cfg.spiral_radius * (k + 1) / n;
    const double th = 2.0 * std::numbers::pi * cfg.spiral_turns * k / n;
    out.push_back({r * std::cos(th), r * std::sin(th)});
  }
  return out;
}

namespace {

struct Detector {
  const geom::StereoRig& rig;
  const SessionSimConfig& cfg;
  const optosim::ImagingConfig& imaging;
  const optosim::LaserBeam& beam;
  const tracker::TrackerConfig& tracker_cfg;

  // Replaces the analytic pixels with detections on rendered spot images.
  bool refine(optosim::ScanSample& s, const optosim::Board& board, std::uint64_t seed) const {
    const double depth = s.hit.z();
    const optosim::BrightAnnulus spot{s.hit, board.plane.normal.vec(), 0.0,
                                      beam.spot_radius_cm(depth) / 100.0, imaging.spot_brightness};
    const int w = cfg.render_window_px;
    int stream = 0;
    for (auto* px : {&s.pixel_left, &s.pixel_right}) {
      const geom::Camera& cam = stream == 0 ? rig.left : rig.right;
      const optosim::Window win{static_cast<int>(std::lround(px->x())) - w / 2,
                                static_cast<int>(std::lround(px->y())) - w / 2, w, w};
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(stream)));
      const auto img = optosim::render_view(cam, std::span<const optosim::BrightAnnulus>(&spot, 1),
                                            imaging.ambient_gain * cfg.scan_ambient_lux, imaging.noise_sigma,
                                            imaging.supersample, rng, win);
      const auto blob = tracker::detect_tag(img, tracker_cfg, *px);
      if (!blob) return false;
      *px = blob->centroid;
      ++stream;
    }
    return true;
  }
};

}  // namespace

SimulatedSession simulate_session(const geom::StereoRig& truth_rig, optosim::SteeringDevice& device,
                                  const SessionSimConfig& cfg, std::uint64_t seed,
                                  const optosim::ImagingConfig& imaging,
                                  const optosim::LaserBeam& beam,
                                  const tracker::TrackerConfig& tracker_cfg) {
  SimulatedSession out;
  out.session.rig = truth_rig;
  for (geom::Camera* cam : {&out.session.rig.left, &out.session.rig.right}) {
    cam->intrinsics.fx *= 1.0 + cfg.focal_perturbation;
    cam->intrinsics.fy *= 1.0 + cfg.focal_perturbation;
  }
  Rng rng(derive_seed(seed, 0x5CA7));
  const double noise = cfg.imaging == ScanImaging::Analytic ? cfg.pixel_noise_px : 0.0;
  const Detector detector{truth_rig, cfg, imaging, beam, tracker_cfg};
  std::uint64_t render_counter = 0;

  auto collect = [&](const optosim::Board& board, const std::vector<Drive>& drives) {
    std::vector<Observation> obs;
    for (auto& s : optosim::scan_sequence(device, truth_rig, board, drives, noise, rng)) {
      if (!s.missed && cfg.imaging == ScanImaging::Rendered) {
        s.missed = !detector.refine(s, board, derive_seed(seed, 0x7E4D, render_counter++));
      }
      if (s.missed) {
        ++out.missed;
        continue;
      }
      obs.push_back({s.drive, s.pixel_left, s.pixel_right});
    }
    return obs;
  };

  const auto xd = axis_scan_drives(cfg, true);
  const auto yd = axis_scan_drives(cfg, false);
  for (std::size_t k = 0; k < cfg.board_depths.size(); ++k) {
    const double tilt = k < cfg.board_tilts_deg.size() ? cfg.board_tilts_deg[k] : 0.0;
    const auto board = optosim::make_board(cfg.board_depths[k], tilt * kDeg);
    BoardScans scans;
    scans.x_scan = collect(board, xd);
    scans.y_scan = collect(board, yd);
    out.session.boards.push_back(std::move(scans));
  }
  const auto spiral_board = optosim::make_board(cfg.spiral_board_depth, cfg.spiral_board_tilt_deg * kDeg);
  out.session.spiral = collect(spiral_board, spiral_drives(cfg));
  return out;
}

}  // namespace beamlink::calib
