#include <cmath>
#include <numbers>

#include "doctest.h"

#include "beamlink/error.hpp"
#include "beamlink/rng.hpp"
#include "beamlink/robot.hpp"

using namespace beamlink;
using namespace beamlink::robot;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::ConfigError;
}

RobotState moving(Routing routing) {
  RobotState s;
  s.mode = Mode::Discharging;
  s.energy_mj = 40.0;
  s.routing = routing;
  return s;
}

}  // namespace

TEST_SUITE("robot") {
  TEST_CASE("current draw by mode and routing") {
    const RobotConfig cfg;
    CHECK(total_current_ma(cfg, Mode::Discharging, Routing::Both) == doctest::Approx(4.8));
    CHECK(total_current_ma(cfg, Mode::Discharging, Routing::LeftOnly) == doctest::Approx(2.55));
    CHECK(total_current_ma(cfg, Mode::Charging, Routing::Both) == doctest::Approx(0.3));
    RobotConfig quiet = cfg;
    quiet.decoding_enabled = false;
    CHECK(total_current_ma(quiet, Mode::Charging, Routing::Both) == 0.0);
    CHECK(total_current_ma(quiet, Mode::Discharging, Routing::Both) == doctest::Approx(4.5));
  }

  TEST_CASE("harvest follows area, efficiency and incidence") {
    const RobotConfig cfg;
    CHECK(harvested_power_mw(cfg, 110.0, 0.0) == doctest::Approx(110.0 * 1.84 * 0.060));
    CHECK(harvested_power_mw(cfg, 110.0, std::numbers::pi / 3) == doctest::Approx(0.5 * 110.0 * 1.84 * 0.060));
    CHECK(harvested_power_mw(cfg, 110.0, 2.0) == 0.0);
    CHECK(harvested_power_mw(cfg, 110.0, 0.0, LightSource::Diffuse) ==
          doctest::Approx(0.56 * harvested_power_mw(cfg, 110.0, 0.0)));
  }

  TEST_CASE("energy ledger closes") {
    const RobotConfig cfg;
    Rng rng(3);
    RobotState s;
    const double e0 = s.energy_mj;
    for (int i = 0; i < 20000; ++i) {
      const double irr = rng.uniform() < 0.3 ? 0.0 : rng.uniform(0.0, 150.0);
      s = harvest_step(s, cfg, irr, rng.uniform(0.0, 1.0), 0.01);
      s = motion_step(s, cfg, 0.01);
      CHECK(s.energy_mj >= 0.0);
      CHECK(s.energy_mj <= cfg.capacity_mj);
    }
    const auto& l = s.ledger;
    CHECK(s.energy_mj == doctest::Approx(e0 + l.harvested_mj - l.consumed_mj - l.spilled_mj + l.deficit_mj));
  }

  TEST_CASE("full capacitor spills and empty one records a deficit") {
    const RobotConfig cfg;
    auto full = moving(Routing::Both);
    full.energy_mj = cfg.capacity_mj;
    full = harvest_step(full, cfg, 150.0, 0.0, 1.0);  // net inflow exceeds the draw
    CHECK(full.energy_mj == cfg.capacity_mj);
    CHECK(full.ledger.spilled_mj == doctest::Approx(full.ledger.harvested_mj - full.ledger.consumed_mj));

    auto empty = moving(Routing::Both);
    empty.energy_mj = 1.0;
    empty = harvest_step(empty, cfg, 0.0, 0.0, 1.0);
    CHECK(empty.energy_mj == 0.0);
    CHECK(empty.ledger.deficit_mj == doctest::Approx(4.8 * 3.0 - 1.0));
  }

  TEST_CASE("mode hysteresis") {
    const RobotConfig cfg;
    RobotState s;
    double t = 0.0;
    while (s.mode == Mode::Charging) {
      s = harvest_step(s, cfg, 50.0, 0.0, 0.001);
      s = motion_step(s, cfg, 0.001);
      t += 0.001;
    }
    CHECK(s.energy_mj >= cfg.discharge_threshold_mj);
    CHECK(s.energy_mj < cfg.discharge_threshold_mj + 0.1);
    const double net = harvested_power_mw(cfg, 50.0, 0.0) - cfg.decode_power_mw();
    CHECK(t == doctest::Approx(cfg.discharge_threshold_mj / net).epsilon(1e-3));
    while (s.mode == Mode::Discharging) {
      s = harvest_step(s, cfg, 0.0, 0.0, 0.001);
      s = motion_step(s, cfg, 0.001);
    }
    CHECK(s.energy_mj < cfg.stop_threshold_mj);
    CHECK(s.energy_mj > cfg.stop_threshold_mj - 0.1);
  }

  TEST_CASE("charging robot does not move") {
    const RobotConfig cfg;
    RobotState s;
    s.energy_mj = 10.0;
    const auto after = motion_step(s, cfg, 1.0);
    CHECK(after.pose.x == 0.0);
    CHECK(after.mode == Mode::Charging);
  }

  TEST_CASE("forward drives straight at wheel speed") {
    const RobotConfig cfg;
    auto s = motion_step(moving(Routing::Both), cfg, 2.0);
    CHECK(s.pose.x == doctest::Approx(0.024));
    CHECK(s.pose.y == 0.0);
    CHECK(s.pose.heading == 0.0);
  }

  TEST_CASE("single motor pivots about the stopped wheel") {
    const RobotConfig cfg;
    const double omega = 0.012 / cfg.wheel_base_m;
    auto left = motion_step(apply_command(moving(Routing::Both), 'L'), cfg, 1.0);
    CHECK(left.pose.heading == doctest::Approx(omega));
    auto right = motion_step(apply_command(moving(Routing::Both), 'R'), cfg, 1.0);
    CHECK(right.pose.heading == doctest::Approx(-omega));
    CHECK(right.pose.y < 0.0);
    CHECK(left.pose.y > 0.0);
    // A full turn returns to the start.
    auto full = motion_step(moving(Routing::RightOnly), cfg, 2.0 * std::numbers::pi / omega);
    CHECK(std::hypot(full.pose.x, full.pose.y) < 1e-12);
  }

  TEST_CASE("exact arc agrees with fine Euler integration") {
    const RobotConfig cfg;
    auto exact = motion_step(moving(Routing::LeftOnly), cfg, 1.7);
    double x = 0, y = 0, h = 0;
    const double v = 0.006, omega = -0.012 / cfg.wheel_base_m;
    const int n = 200000;
    const double dt = 1.7 / n;
    for (int i = 0; i < n; ++i) {
      x += v * std::cos(h + 0.5 * omega * dt) * dt;
      y += v * std::sin(h + 0.5 * omega * dt) * dt;
      h += omega * dt;
    }
    CHECK(exact.pose.x == doctest::Approx(x).epsilon(1e-6));
    CHECK(exact.pose.y == doctest::Approx(y).epsilon(1e-6));
  }

  TEST_CASE("commands") {
    RobotState s;
    CHECK(apply_command(s, 'L').routing == Routing::RightOnly);
    CHECK(apply_command(s, 'R').routing == Routing::LeftOnly);
    CHECK(apply_command(apply_command(s, 'R'), 'F').routing == Routing::Both);
    CHECK(code_of([&] { apply_command(s, 'B'); }) == ErrorCode::UnknownSymbol);
  }

  TEST_CASE("config validation") {
    RobotConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.stop_threshold_mj = 25.0;
    CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::ConfigError);
    cfg = RobotConfig{};
    cfg.adc_rate_hz = 3.0;
    CHECK(code_of([&] { cfg.validate(); }) == ErrorCode::BelowMinimumRate);
  }

  TEST_CASE("steady-state speed matches a long simulation") {
    const RobotConfig cfg;
    for (double irr : {20.0, 60.0, 110.0}) {
      RobotState s;
      s.energy_mj = cfg.stop_threshold_mj;
      const double dt = 0.001;
      // Skip the first charge, then measure over whole seconds.
      for (int i = 0; i < 30000; ++i) s = motion_step(harvest_step(s, cfg, irr, 0.0, dt), cfg, dt);
      const double x0 = s.pose.x;
      const double span = 600.0;
      for (int i = 0; i < static_cast<int>(span / dt); ++i) s = motion_step(harvest_step(s, cfg, irr, 0.0, dt), cfg, dt);
      const double measured = 100.0 * (s.pose.x - x0) / span;
      CHECK(measured == doctest::Approx(steady_state_speed_cm_s(cfg, irr)).epsilon(0.03));
    }
    CHECK(steady_state_speed_cm_s(cfg, 5.0) == 0.0);
  }
}
