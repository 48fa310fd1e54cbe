#include <cmath>
#include <numbers>

#include "doctest.h"

#include "beamlink/calib.hpp"
#include "beamlink/error.hpp"
#include "beamlink/optosim.hpp"
#include "beamlink/rng.hpp"
#include "beamlink/session_sim.hpp"

using namespace beamlink;
using namespace beamlink::calib;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::ConfigError;
}

double rotation_angle(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

SimulatedSession make_session(double noise_px, std::uint64_t seed, optosim::SteeringDevice& device) {
  SessionSimConfig cfg;
  cfg.pixel_noise_px = noise_px;
  return simulate_session(optosim::default_stereo_rig(), device, cfg, seed);
}

// Random point inside the region the cameras and device both cover.
Vec3 random_target(Rng& rng) {
  return {rng.uniform(-0.2, 0.2), rng.uniform(-0.15, 0.15), rng.uniform(0.8, 1.3)};
}

}  // namespace

TEST_SUITE("calib") {
  TEST_CASE("noiseless session recovers the pose and mapping exactly") {
    optosim::SteeringDevice device(optosim::default_device_config());
    const auto sim = make_session(0.0, 1, device);
    CHECK(sim.missed == 0);
    const auto cal = calibrate(sim.session);
    const auto& truth = device.pose();
    CHECK(rotation_angle(cal.pose.R, truth.R) < 1e-4);
    CHECK((cal.pose.T - truth.T).norm() < 1e-4);
    CHECK(cal.mapping.fit_residual_rms <= 1e-9);

    const auto& nl = device.config().nonlinearity;
    CHECK(cal.mapping.m_a[3] == doctest::Approx(1.0 / nl.gain).epsilon(1e-6));
    CHECK(cal.mapping.m_a[4] == doctest::Approx(nl.kappa).epsilon(1e-6));
    CHECK(cal.mapping.m_b[1] == doctest::Approx(1.0 / nl.gain).epsilon(1e-6));
    CHECK(cal.mapping.m_b[2] == doctest::Approx(nl.kappa_b).epsilon(1e-6));
  }

  TEST_CASE("recovered rotation is orthonormal and proper") {
    optosim::SteeringDevice device(optosim::default_device_config());
    for (std::uint64_t seed : {2, 3, 4}) {
      const auto cal = calibrate(make_session(0.5, seed, device).session);
      const Mat3& R = cal.pose.R;
      CHECK((R.transpose() * R - Mat3::Identity()).norm() < 1e-9);
      CHECK(R.determinant() == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  TEST_CASE("noisy session stays within a few millimeters") {
    optosim::SteeringDevice device(optosim::default_device_config());
    const auto cal = calibrate(make_session(0.5, 11, device).session);
    CHECK(rotation_angle(cal.pose.R, device.pose().R) < 0.5 * kDeg);
    CHECK((cal.pose.T - device.pose().T).norm() < 5e-3);
  }

  TEST_CASE("single board position is a precondition violation") {
    optosim::SteeringDevice device(optosim::default_device_config());
    auto session = make_session(0.0, 1, device).session;
    session.boards.resize(1);
    CHECK(code_of([&] { validate_session(session); }) == ErrorCode::PreconditionViolated);
    try {
      calibrate(session);
      FAIL("expected a stage failure");
    } catch (const StageFailure& e) {
      CHECK(e.stage() == 2);  // board count belongs to pose recovery
      CHECK(e.code() == ErrorCode::PreconditionViolated);
    }
  }

  TEST_CASE("one shared drive leaves too few beam groups") {
    optosim::SteeringDevice device(optosim::default_device_config());
    auto session = make_session(0.0, 1, device).session;
    for (auto& b : session.boards) {
      b.x_scan.resize(1);  // every board keeps only its first drive
      b.y_scan.clear();
    }
    CHECK(code_of([&] { recover_translation(session, device.pose().R); }) == ErrorCode::TooFewGroups);
  }

  TEST_CASE("spiral collapsed onto one axis is rank deficient") {
    optosim::SteeringDevice device(optosim::default_device_config());
    auto session = make_session(0.0, 1, device).session;
    session.spiral.clear();
    for (const auto& o : session.boards[1].x_scan) session.spiral.push_back(o);  // beta == 0 throughout
    CHECK(code_of([&] { fit_mapping(session, device.pose()); }) == ErrorCode::RankDeficient);
    session.spiral.resize(4);
    CHECK(code_of([&] { fit_mapping(session, device.pose()); }) == ErrorCode::RankDeficient);
  }

  TEST_CASE("identity nonlinearity yields the identity mapping") {
    auto dcfg = optosim::default_device_config();
    dcfg.nonlinearity.gain = 1.0;
    dcfg.nonlinearity.kappa = 0.0;
    dcfg.nonlinearity.kappa_b = 0.0;
    optosim::SteeringDevice device(dcfg);
    SessionSimConfig cfg;
    cfg.axis_drive_span = 0.3;
    cfg.spiral_radius = 0.3;
    const auto sim = simulate_session(optosim::default_stereo_rig(), device, cfg, 1);
    const auto m = fit_mapping(sim.session, device.pose());
    for (std::size_t k = 0; k < 9; ++k) {
      CHECK(std::abs(m.m_a[k] - (k == 3 ? 1.0 : 0.0)) < 1e-6);
      CHECK(std::abs(m.m_b[k] - (k == 1 ? 1.0 : 0.0)) < 1e-6);
    }
  }

  TEST_CASE("target on the device axis needs the constant drive") {
    optosim::SteeringDevice device(optosim::default_device_config());
    const auto cal = calibrate(make_session(0.0, 1, device).session);
    const Vec3 target = cal.pose.T + 1.1 * cal.pose.z_axis();
    const Drive d = steer_to_point(cal, target);
    CHECK(d.a == doctest::Approx(cal.mapping.m_a[0]));
    CHECK(d.b == doctest::Approx(cal.mapping.m_b[0]));
  }

  TEST_CASE("steering from a noiseless calibration hits random targets") {
    optosim::SteeringDevice device(optosim::default_device_config());
    const auto cal = calibrate(make_session(0.0, 1, device).session);
    Rng rng(9);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
      const Vec3 target = random_target(rng);
      const auto ray = device.settle(steer_to_point(cal, target));
      worst = std::max(worst, ray.distance_to(target));
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("target behind the device is rejected") {
    optosim::SteeringDevice device(optosim::default_device_config());
    const auto cal = calibrate(make_session(0.0, 1, device).session);
    const Vec3 behind = cal.pose.T - 0.5 * cal.pose.z_axis();
    CHECK(code_of([&] { steer_to_point(cal, behind); }) == ErrorCode::BehindDevice);
  }

  TEST_CASE("moving the stereo frame moves the recovered pose with it") {
    optosim::SteeringDevice device(optosim::default_device_config());
    const auto sim = make_session(0.3, 5, device);
    const auto base = calibrate(sim.session);

    geom::Rigid G = geom::Rigid::Identity();
    G.linear() = (Eigen::AngleAxisd(0.3, Vec3(0.2, 1.0, -0.4).normalized())).toRotationMatrix();
    G.translation() = Vec3(0.5, -0.2, 1.0);
    auto moved = sim.session;  // same pixels, cameras relocated by G
    moved.rig.left.pose = G * moved.rig.left.pose;
    moved.rig.right.pose = G * moved.rig.right.pose;
    const auto cal = calibrate(moved);

    CHECK(rotation_angle(cal.pose.R, G.linear() * base.pose.R) < 1e-8);
    CHECK((cal.pose.T - G * base.pose.T).norm() < 1e-8);
    for (std::size_t k = 0; k < 9; ++k) {
      CHECK(cal.mapping.m_a[k] == doctest::Approx(base.mapping.m_a[k]).epsilon(1e-6));
      CHECK(cal.mapping.m_b[k] == doctest::Approx(base.mapping.m_b[k]).epsilon(1e-6));
    }
  }

  TEST_CASE("steering drive is Lipschitz in the target") {
    optosim::SteeringDevice device(optosim::default_device_config());
    const auto cal = calibrate(make_session(0.0, 1, device).session);
    Rng rng(12);
    for (int i = 0; i < 100; ++i) {
      const Vec3 p = random_target(rng);
      const Drive d0 = steer_to_point(cal, p);
      // Local gain from a 0.1 mm finite difference in each direction.
      double gain = 0.0;
      for (int k = 0; k < 3; ++k) {
        const Drive dk = steer_to_point(cal, p + 1e-4 * Vec3::Unit(k));
        gain += std::hypot(dk.a - d0.a, dk.b - d0.b) / 1e-4;
      }
      const Vec3 step = 1e-3 * Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian()).normalized();
      const Drive d1 = steer_to_point(cal, p + step);
      CHECK(std::hypot(d1.a - d0.a, d1.b - d0.b) <= 1.5 * gain * 1e-3);
    }
  }

  TEST_CASE("rendered spot detection supports calibration") {
    optosim::SteeringDevice device(optosim::default_device_config());
    SessionSimConfig cfg;
    cfg.imaging = ScanImaging::Rendered;
    cfg.axis_drives = 7;
    cfg.spiral_samples = 23;  // 20 would alias onto the axes at 5 turns
    const auto sim = simulate_session(optosim::default_stereo_rig(), device, cfg, 3);
    const auto cal = calibrate(sim.session);
    CHECK(rotation_angle(cal.pose.R, device.pose().R) < 1.0 * kDeg);
    CHECK((cal.pose.T - device.pose().T).norm() < 1e-2);
  }
}
