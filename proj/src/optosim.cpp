#include "beamlink/optosim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "beamlink/error.hpp"

namespace beamlink::optosim {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;
}

Vec3 device_direction(const Angles& angles) {
  return Vec3(std::tan(angles.alpha), std::tan(angles.beta), 1.0).normalized();
}

Angles device_angles(const Vec3& direction) {
  return {std::atan2(direction.x(), direction.z()), std::atan2(direction.y(), direction.z())};
}

Drive DriveNonlinearity::drive_for(const Angles& ang) const {
  const double al = ang.alpha, be = ang.beta;
  Drive d{al / gain + kappa * al * be, be / gain + kappa_b * be * be};
  if (mode == NonlinearityMode::Cubic) {
    d.a += cubic * al * al * al;
    d.b += cubic * be * be * be;
  }
  return d;
}

Angles DriveNonlinearity::angles_for(const Drive& drive) const {
  Angles x{gain * drive.a, gain * drive.b};
  const double c3 = mode == NonlinearityMode::Cubic ? cubic : 0.0;
  for (int it = 0; it < 60; ++it) {
    const Drive f = drive_for(x);
    const double ra = f.a - drive.a;
    const double rb = f.b - drive.b;
    // Upper-triangular Jacobian: b does not depend on alpha.
    const double j11 = 1.0 / gain + kappa * x.beta + 3.0 * c3 * x.alpha * x.alpha;
    const double j12 = kappa * x.alpha;
    const double j22 = 1.0 / gain + 2.0 * kappa_b * x.beta + 3.0 * c3 * x.beta * x.beta;
    const double dbeta = rb / j22;
    const double dalpha = (ra - j12 * dbeta) / j11;
    x.alpha -= dalpha;
    x.beta -= dbeta;
    if (std::abs(dalpha) < 1e-16 && std::abs(dbeta) < 1e-16) break;
  }
  return x;
}

SteeringDeviceConfig default_device_config() {
  SteeringDeviceConfig cfg;
  cfg.pose = default_device_pose();
  return cfg;
}

double SlewModel::time_constant() const { return 1.0 / (2.0 * std::numbers::pi * bandwidth_hz); }

geom::SteeringPose default_device_pose() {
  geom::SteeringPose pose;
  pose.R = (Eigen::AngleAxisd(3.0 * kDeg, Vec3::UnitZ()) *
            Eigen::AngleAxisd(-2.0 * kDeg, Vec3::UnitY()) *
            Eigen::AngleAxisd(1.5 * kDeg, Vec3::UnitX()))
               .toRotationMatrix();
  pose.T = Vec3(0.03, -0.07, 0.02);
  return pose;
}

SteeringDevice::SteeringDevice(SteeringDeviceConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.pose.validate();
}

double SteeringDevice::optical_limit() const { return 2.0 * cfg_.mechanical_limit_deg * kDeg; }

Angles SteeringDevice::target_angles(const Drive& drive) const {
  if (!(std::abs(drive.a) <= 1.0) || !(std::abs(drive.b) <= 1.0)) {
    throw Error(ErrorCode::DriveOutOfRange, "drive signals must lie in [-1, 1]");
  }
  Angles t = cfg_.nonlinearity.angles_for(drive);
  const double lim = optical_limit();
  t.alpha = std::clamp(t.alpha, -lim, lim);
  t.beta = std::clamp(t.beta, -lim, lim);
  return t;
}

Ray3 SteeringDevice::steer_to(const Drive& drive, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::PreconditionViolated, "dt must be positive");
  const Angles target = target_angles(drive);
  if (cfg_.slew.instantaneous) {
    angles_ = target;
    return beam();
  }
  const double k = 1.0 - std::exp(-dt / cfg_.slew.time_constant());
  const double max_step = cfg_.slew.max_rate_rad_s * dt;
  auto advance = [&](double cur, double tgt) {
    return cur + std::clamp((tgt - cur) * k, -max_step, max_step);
  };
  angles_.alpha = advance(angles_.alpha, target.alpha);
  angles_.beta = advance(angles_.beta, target.beta);
  return beam();
}

Ray3 SteeringDevice::settle(const Drive& drive) {
  angles_ = target_angles(drive);
  return beam();
}

Ray3 SteeringDevice::beam() const {
  return {cfg_.pose.T, UnitVec3::normalize(cfg_.pose.R * device_direction(angles_))};
}

double chain_throughput(std::span<const double> chain) {
  double t = 1.0;
  for (double e : chain) {
    if (!(e > 0.0 && e <= 1.0)) {
      throw Error(ErrorCode::PreconditionViolated, "throughput must lie in (0, 1]");
    }
    t *= e;
  }
  return t;
}

double LaserBeam::optical_power_mw() const {
  return electrical_power_w * 1000.0 * wall_plug_efficiency * chain_throughput(optical_chain);
}

double LaserBeam::spot_radius_cm(double depth_m) const {
  const double r = spot_diameter_ref_cm / 2.0 +
                   (depth_m - reference_depth_m) * 100.0 * std::tan(divergence_half_angle);
  return std::max(r, 1e-4);
}

double irradiance_at(const LaserBeam& beam, const Ray3& ray, const Vec3& target,
                     const Vec3& surface_normal) {
  const Vec3 w = target - ray.origin;
  const double depth = w.dot(ray.direction.vec());
  if (depth <= 0.0) return 0.0;
  const double radial_cm = (w - depth * ray.direction.vec()).norm() * 100.0;
  const double R = beam.spot_radius_cm(depth);
  const double P = beam.optical_power_mw();
  double on_axis_plane = 0.0;
  if (beam.profile == BeamProfile::TopHat) {
    if (radial_cm > R) return 0.0;
    on_axis_plane = P / (std::numbers::pi * R * R);
  } else {
    if (radial_cm > 2.0 * R) return 0.0;
    on_axis_plane = 2.0 * P / (std::numbers::pi * R * R) *
                    std::exp(-2.0 * radial_cm * radial_cm / (R * R));
  }
  const double cos_inc = std::max(0.0, -ray.direction.dot(surface_normal.normalized()));
  return on_axis_plane * cos_inc;
}

double irradiance_at(const LaserBeam& beam, const SteeringDevice& device, const Vec3& target,
                     const Vec3& surface_normal) {
  return irradiance_at(beam, device.beam(), target, surface_normal);
}

bool SimScene::in_testbed(const Vec2& xy) const {
  const Vec2 d = (xy - testbed_center).cwiseAbs();
  return d.x() <= testbed_half_extent.x() && d.y() <= testbed_half_extent.y();
}

void SimScene::place_robot(const Vec2& xy) {
  tag_center = Vec3(xy.x(), xy.y(), ground_z - tag.height_m);
  tag_normal = Vec3(0.0, 0.0, -1.0);
}

namespace {

void plane_basis(const Vec3& normal, Vec3& e1, Vec3& e2) {
  const Vec3 n = normal.normalized();
  const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  e1 = (helper - helper.dot(n) * n).normalized();
  e2 = n.cross(e1);
}

}  // namespace

SyntheticImage render_view(const geom::Camera& camera, std::span<const BrightAnnulus> objects,
                           double background, double noise_sigma, int supersample, Rng& rng,
                           const std::optional<Window>& window) {
  const auto& K = camera.intrinsics;
  Window win = window.value_or(Window{0, 0, K.width, K.height});
  const int x_lo = std::clamp(win.x0, 0, K.width);
  const int y_lo = std::clamp(win.y0, 0, K.height);
  const int x_hi = std::clamp(win.x0 + win.width, 0, K.width);
  const int y_hi = std::clamp(win.y0 + win.height, 0, K.height);

  SyntheticImage img;
  img.x0 = x_lo;
  img.y0 = y_lo;
  img.width = x_hi - x_lo;
  img.height = y_hi - y_lo;
  std::vector<double> added(static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height), 0.0);

  const int ss = std::max(1, supersample);
  const double inv_ss = 1.0 / ss;
  for (const auto& obj : objects) {
    if (obj.brightness == 0.0 || obj.outer_radius <= 0.0) continue;
    Vec3 e1, e2;
    plane_basis(obj.normal, e1, e2);
    double bx0 = 1e300, by0 = 1e300, bx1 = -1e300, by1 = -1e300;
    bool visible = true;
    for (int k = 0; k < 32; ++k) {
      const double th = 2.0 * std::numbers::pi * k / 32.0;
      const auto px = camera.project(obj.center + obj.outer_radius * (std::cos(th) * e1 + std::sin(th) * e2));
      if (!px) {
        visible = false;
        break;
      }
      bx0 = std::min(bx0, px->x());
      by0 = std::min(by0, px->y());
      bx1 = std::max(bx1, px->x());
      by1 = std::max(by1, px->y());
    }
    if (!visible) continue;
    const int ix0 = std::max(x_lo, static_cast<int>(std::floor(bx0)) - 2);
    const int iy0 = std::max(y_lo, static_cast<int>(std::floor(by0)) - 2);
    const int ix1 = std::min(x_hi - 1, static_cast<int>(std::ceil(bx1)) + 2);
    const int iy1 = std::min(y_hi - 1, static_cast<int>(std::ceil(by1)) + 2);
    const geom::Plane3 plane = geom::Plane3::through(obj.center, UnitVec3::normalize(obj.normal));
    const double r_in2 = obj.inner_radius * obj.inner_radius;
    const double r_out2 = obj.outer_radius * obj.outer_radius;
    for (int y = iy0; y <= iy1; ++y) {
      for (int x = ix0; x <= ix1; ++x) {
        int covered = 0;
        for (int sy = 0; sy < ss; ++sy) {
          for (int sx = 0; sx < ss; ++sx) {
            const Vec2 p(x + (sx + 0.5) * inv_ss - 0.5, y + (sy + 0.5) * inv_ss - 0.5);
            const Ray3 ray = camera.back_project(p);
            const auto t = plane.intersect(ray);
            if (!t || *t <= 0.0) continue;
            const double r2 = (ray.at(*t) - obj.center).squaredNorm();
            if (r2 >= r_in2 && r2 <= r_out2) ++covered;
          }
        }
        if (covered > 0) {
          added[static_cast<std::size_t>(y - y_lo) * static_cast<std::size_t>(img.width) +
                static_cast<std::size_t>(x - x_lo)] +=
              obj.brightness * covered * inv_ss * inv_ss;
        }
      }
    }
  }

  img.pixels.resize(added.size());
  for (std::size_t i = 0; i < added.size(); ++i) {
    const double v = background + added[i] + noise_sigma * rng.gaussian();
    img.pixels[i] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  return img;
}

double tag_brightness(const ImagingConfig& imaging, const geom::Camera& camera, const Vec3& tag) {
  const double d = (tag - camera.center()).norm();
  return imaging.led_gain * imaging.led_power_w / std::pow(d, 4);
}

std::pair<SyntheticImage, SyntheticImage> render_stereo_pair(
    const SimScene& scene, const geom::StereoRig& rig, const ImagingConfig& imaging,
    std::uint64_t seed, const std::optional<Window>& window_left,
    const std::optional<Window>& window_right) {
  const double background = imaging.ambient_gain * scene.ambient_lux;
  auto view = [&](const geom::Camera& cam, std::uint64_t stream, const std::optional<Window>& win) {
    BrightAnnulus tag{scene.tag_center, scene.tag_normal, scene.tag.inner_radius_m,
                      scene.tag.outer_radius_m, tag_brightness(imaging, cam, scene.tag_center)};
    Rng rng(derive_seed(seed, stream));
    return render_view(cam, std::span<const BrightAnnulus>(&tag, 1), background,
                       imaging.noise_sigma, imaging.supersample, rng, win);
  };
  return {view(rig.left, 1, window_left), view(rig.right, 2, window_right)};
}

void write_pgm(const SyntheticImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
}

geom::StereoRig default_stereo_rig(double baseline_m) {
  geom::StereoRig rig;
  rig.left.pose.translation() = Vec3(-baseline_m / 2.0, 0.0, 0.0);
  rig.right.pose.translation() = Vec3(baseline_m / 2.0, 0.0, 0.0);
  return rig;
}

Board make_board(double depth_m, double tilt_rad, const Vec3& center_xy) {
  const Vec3 normal = Eigen::AngleAxisd(tilt_rad, Vec3::UnitX()) * Vec3(0.0, 0.0, -1.0);
  Board b;
  b.center = Vec3(center_xy.x(), center_xy.y(), depth_m);
  b.plane = geom::Plane3::through(b.center, UnitVec3::normalize(normal));
  return b;
}

std::vector<ScanSample> scan_sequence(SteeringDevice& device, const geom::StereoRig& rig,
                                      const Board& board, std::span<const Drive> drives,
                                      double pixel_noise_px, Rng& rng) {
  std::vector<ScanSample> out;
  out.reserve(drives.size());
  for (const Drive& d : drives) {
    ScanSample s;
    s.drive = d;
    const Ray3 ray = device.settle(d);
    const auto t = board.plane.intersect(ray);
    if (!t || *t <= 0.0) {
      s.missed = true;
      out.push_back(s);
      continue;
    }
    s.hit = ray.at(*t);
    const Vec3 off = s.hit - board.center;
    const auto pl = rig.left.project(s.hit);
    const auto pr = rig.right.project(s.hit);
    if (std::abs(off.x()) > board.half_size || std::abs(off.y()) > board.half_size || !pl || !pr) {
      s.missed = true;
      out.push_back(s);
      continue;
    }
    s.pixel_left = *pl;
    s.pixel_right = *pr;
    if (pixel_noise_px > 0.0) {
      s.pixel_left += Vec2(rng.gaussian(), rng.gaussian()) * pixel_noise_px;
      s.pixel_right += Vec2(rng.gaussian(), rng.gaussian()) * pixel_noise_px;
    }
    if (!rig.left.in_bounds(s.pixel_left) || !rig.right.in_bounds(s.pixel_right)) s.missed = true;
    out.push_back(s);
  }
  return out;
}

}  // namespace beamlink::optosim
