#pragma once

// Ground-truth virtual optical rig: steerable mirror, laser beam, stereo
// imaging of the retroreflective tag, and calibration scan generation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "beamlink/geom.hpp"
#include "beamlink/rng.hpp"

namespace beamlink::optosim {

using geom::Mat3;
using geom::Ray3;
using geom::UnitVec3;
using geom::Vec2;
using geom::Vec3;

/// Normalized actuator inputs, each in [-1, 1].
struct Drive {
  double a = 0.0;
  double b = 0.0;
  friend bool operator==(const Drive&, const Drive&) = default;
};

/// Outgoing optical angles in the device frame, radians.
/// alpha = atan2(dx, dz), beta = atan2(dy, dz).
struct Angles {
  double alpha = 0.0;
  double beta = 0.0;
};

/// Unit direction in the device frame for the given outgoing angles.
Vec3 device_direction(const Angles& angles);
/// Inverse of device_direction for any direction with positive z.
Angles device_angles(const Vec3& direction);

enum class NonlinearityMode { Quadratic, Cubic };

/// Ground-truth relation between drive signals and optical angles:
///   a = alpha/g + kappa*alpha*beta (+ cubic*alpha^3)
///   b = beta/g + kappa_b*beta^2    (+ cubic*beta^3)
/// The quadratic form is exactly representable by a degree-2 mapping.
struct DriveNonlinearity {
  double gain = 0.75;  // rad per drive unit
  double kappa = 0.05;
  double kappa_b = 0.03;
  double cubic = 0.04;
  NonlinearityMode mode = NonlinearityMode::Quadratic;

  Drive drive_for(const Angles& angles) const;
  /// Newton inversion of drive_for.
  Angles angles_for(const Drive& drive) const;
};

struct SlewModel {
  double bandwidth_hz = 300.0;    // small-step bandwidth of the first-order lag
  double max_rate_rad_s = 60.0;   // optical angular rate limit
  bool instantaneous = false;

  double time_constant() const;
};

struct SteeringDeviceConfig {
  geom::SteeringPose pose;
  double mechanical_limit_deg = 25.0;
  DriveNonlinearity nonlinearity;
  SlewModel slew;
};

/// Default ground-truth pose: a few degrees off the stereo frame, offset
/// beside the cameras.
geom::SteeringPose default_device_pose();
/// Default device with the default ground-truth pose.
SteeringDeviceConfig default_device_config();

/// Stateful mirror model. Not thread-safe; one owner at a time.
class SteeringDevice {
 public:
  explicit SteeringDevice(SteeringDeviceConfig cfg);

  /// Advances the slew state by dt toward the commanded drive and returns the beam.
  Ray3 steer_to(const Drive& drive, double dt);
  /// Jumps to the settled state for `drive`.
  Ray3 settle(const Drive& drive);

  Ray3 beam() const;
  const Angles& angles() const { return angles_; }
  const geom::SteeringPose& pose() const { return cfg_.pose; }
  const SteeringDeviceConfig& config() const { return cfg_; }
  double optical_limit() const;  // rad, twice the mechanical tilt limit

 private:
  Angles target_angles(const Drive& drive) const;

  SteeringDeviceConfig cfg_;
  Angles angles_{};
};

enum class BeamProfile { TopHat, Gaussian };

struct LaserBeam {
  double electrical_power_w = 6.3;
  // Fitted so the default tophat spot meets 110 mW/cm^2 at 1.3 m.
  double wall_plug_efficiency = 0.09;
  std::vector<double> optical_chain{0.998, 0.96, 0.95};
  double divergence_half_angle = 5e-5;  // rad
  double spot_diameter_ref_cm = 2.4;
  double reference_depth_m = 1.3;
  BeamProfile profile = BeamProfile::TopHat;

  double optical_power_mw() const;
  /// Spot radius (tophat edge, or gaussian 1/e^2 radius) at a depth along the beam.
  double spot_radius_cm(double depth_m) const;
};

/// Product of element throughputs; each must lie in (0, 1].
double chain_throughput(std::span<const double> chain);

/// Irradiance (mW/cm^2) on a surface at `target` with outward normal
/// `surface_normal` (pointing back toward the device).
double irradiance_at(const LaserBeam& beam, const Ray3& ray, const Vec3& target,
                     const Vec3& surface_normal);
double irradiance_at(const LaserBeam& beam, const SteeringDevice& device, const Vec3& target,
                     const Vec3& surface_normal);

struct TagGeometry {
  double outer_radius_m = 0.012;
  double inner_radius_m = 0.005;  // solar-cell cutout
  double height_m = 0.012;        // tag plane above the ground
};

/// Axis-aligned rectangular footprint on the ground plane.
struct Obstacle {
  Vec2 center = Vec2::Zero();
  Vec2 half_extent = Vec2(0.02, 0.02);
};

struct SimScene {
  Vec3 tag_center = Vec3(0.0, 0.0, 1.3 - 0.012);
  Vec3 tag_normal = Vec3(0.0, 0.0, -1.0);  // toward the cameras
  TagGeometry tag;
  std::vector<Obstacle> obstacles;
  double ambient_lux = 600.0;
  double ground_z = 1.3;
  Vec2 testbed_center = Vec2::Zero();
  Vec2 testbed_half_extent = Vec2(0.455, 0.455);

  bool in_testbed(const Vec2& xy) const;
  /// Places the tag over a ground position.
  void place_robot(const Vec2& xy);
};

struct ImagingConfig {
  double led_power_w = 1.0;
  double led_gain = 514.0;         // gray levels * m^4 / W
  double ambient_gain = 0.05;      // gray levels per lux
  double noise_sigma = 2.0;        // gray levels
  int supersample = 4;
  double spot_brightness = 200.0;  // unfiltered laser spot, used for calibration scans
};

/// 8-bit row-major image, origin top-left. (x0, y0) is the position of this
/// buffer inside the full sensor when it is a region-of-interest readout.
struct SyntheticImage {
  int width = 0;
  int height = 0;
  int x0 = 0;
  int y0 = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
  std::uint8_t& at(int x, int y) {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
};

struct Window {
  int x0 = 0, y0 = 0, width = 0, height = 0;
};

/// Flat bright annulus (inner radius 0 gives a disc) lying in a plane.
struct BrightAnnulus {
  Vec3 center;
  Vec3 normal;
  double inner_radius = 0.0;
  double outer_radius = 0.0;
  double brightness = 0.0;  // gray levels added at full coverage
};

/// Renders a set of bright annuli over an ambient background with gaussian
/// pixel noise. The window is clipped to the sensor.
SyntheticImage render_view(const geom::Camera& camera, std::span<const BrightAnnulus> objects,
                           double background, double noise_sigma, int supersample, Rng& rng,
                           const std::optional<Window>& window = std::nullopt);

/// Tag brightness seen by a camera with a co-located LED (1/d^4 round trip).
double tag_brightness(const ImagingConfig& imaging, const geom::Camera& camera, const Vec3& tag);

/// Renders the retroreflective tag in both cameras. The laser spot itself is
/// never visible (optical filter in front of the sensors).
std::pair<SyntheticImage, SyntheticImage> render_stereo_pair(
    const SimScene& scene, const geom::StereoRig& rig, const ImagingConfig& imaging,
    std::uint64_t seed, const std::optional<Window>& window_left = std::nullopt,
    const std::optional<Window>& window_right = std::nullopt);

void write_pgm(const SyntheticImage& image, const std::filesystem::path& path);

/// Default stereo rig: two parallel cameras straddling the stereo origin,
/// looking down +z.
geom::StereoRig default_stereo_rig(double baseline_m = 0.2);

/// Checkerboard used for calibration scans.
struct Board {
  geom::Plane3 plane;
  Vec3 center;
  double half_size = 0.75;  // m, square extent in the board plane
};

/// Board whose normal faces the device, tilted by `tilt_rad` about the x axis.
Board make_board(double depth_m, double tilt_rad = 0.0, const Vec3& center_xy = Vec3::Zero());

struct ScanSample {
  Drive drive;
  bool missed = false;  // BeamMissesBoard
  Vec3 hit = Vec3::Zero();
  Vec2 pixel_left = Vec2::Zero();
  Vec2 pixel_right = Vec2::Zero();
};

/// Settles the beam at each drive, intersects it with the board, and projects
/// the hit into both cameras with gaussian pixel noise.
std::vector<ScanSample> scan_sequence(SteeringDevice& device, const geom::StereoRig& rig,
                                      const Board& board, std::span<const Drive> drives,
                                      double pixel_noise_px, Rng& rng);

}  // namespace beamlink::optosim
