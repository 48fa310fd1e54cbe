#include "beamlink/robot.hpp"

#include <algorithm>
#include <cmath>

#include "beamlink/error.hpp"

namespace beamlink::robot {

std::string_view to_string(Mode m) { return m == Mode::Charging ? "charging" : "discharging"; }

double RobotConfig::decode_current_ma() const {
  return decoding_enabled ? fsk::decode_current_model_ma(adc_rate_hz) : 0.0;
}

void RobotConfig::validate() const {
  if (!(stop_threshold_mj >= 0.0 && stop_threshold_mj < discharge_threshold_mj &&
        discharge_threshold_mj <= capacity_mj)) {
    throw Error(ErrorCode::ConfigError, "robot thresholds must satisfy 0 <= stop < discharge <= capacity");
  }
  if (!(cell_area_cm2 >= 0.0 && harvest_efficiency >= 0.0 && diffuse_efficiency_factor >= 0.0 &&
        wheel_speed_cm_s >= 0.0 && wheel_base_m > 0.0 && supply_voltage_v > 0.0 && locomotion_current_ma >= 0.0)) {
    throw Error(ErrorCode::ConfigError, "robot rates and dimensions must be non-negative");
  }
  if (decoding_enabled) (void)decode_current_ma();
}

double total_current_ma(const RobotConfig& cfg, Mode mode, Routing routing) {
  double motors = 0.0;
  if (mode == Mode::Discharging) {
    motors = routing == Routing::Both ? cfg.locomotion_current_ma : 0.5 * cfg.locomotion_current_ma;
  }
  return motors + cfg.decode_current_ma();
}

double harvested_power_mw(const RobotConfig& cfg, double irradiance, double incidence_rad, LightSource source) {
  const double cos_t = std::max(0.0, std::cos(incidence_rad));
  const double eff = cfg.harvest_efficiency * (source == LightSource::Diffuse ? cfg.diffuse_efficiency_factor : 1.0);
  return std::max(0.0, irradiance) * cfg.cell_area_cm2 * cos_t * eff;
}

double steady_state_speed_cm_s(const RobotConfig& cfg, double irradiance, LightSource source) {
  const double net = harvested_power_mw(cfg, irradiance, 0.0, source) - cfg.decode_power_mw();
  if (net <= 0.0) return 0.0;
  const double duty = std::min(1.0, net / cfg.motor_power_mw());
  return duty * cfg.wheel_speed_cm_s;
}

RobotState harvest_step(RobotState s, const RobotConfig& cfg, double irradiance, double incidence_rad, double dt,
                        LightSource source) {
  if (!(dt > 0.0)) throw Error(ErrorCode::PreconditionViolated, "dt must be positive");
  const double in = harvested_power_mw(cfg, irradiance, incidence_rad, source) * dt;
  const double out = total_current_ma(cfg, s.mode, s.routing) * cfg.supply_voltage_v * dt;
  double e = s.energy_mj + in - out;
  s.ledger.harvested_mj += in;
  s.ledger.consumed_mj += out;
  if (e > cfg.capacity_mj) {
    s.ledger.spilled_mj += e - cfg.capacity_mj;
    e = cfg.capacity_mj;
  } else if (e < 0.0) {
    s.ledger.deficit_mj += -e;
    e = 0.0;
  }
  s.energy_mj = e;
  return s;
}

RobotState apply_command(RobotState s, fsk::Symbol symbol) {
  switch (symbol) {
    case 'F': s.routing = Routing::Both; break;
    case 'L': s.routing = Routing::RightOnly; break;
    case 'R': s.routing = Routing::LeftOnly; break;
    default: throw Error(ErrorCode::UnknownSymbol, std::string("robot has no command '") + symbol + "'");
  }
  s.last_command = symbol;
  return s;
}

RobotState motion_step(RobotState s, const RobotConfig& cfg, double dt) {
  if (!(dt > 0.0)) throw Error(ErrorCode::PreconditionViolated, "dt must be positive");
  if (s.mode == Mode::Charging && s.energy_mj >= cfg.discharge_threshold_mj) s.mode = Mode::Discharging;
  if (s.mode == Mode::Discharging && s.energy_mj < cfg.stop_threshold_mj) s.mode = Mode::Charging;
  if (s.mode == Mode::Charging) return s;

  const double v = cfg.wheel_speed_cm_s / 100.0;
  const double vl = s.routing == Routing::RightOnly ? 0.0 : v;
  const double vr = s.routing == Routing::LeftOnly ? 0.0 : v;
  const double lin = 0.5 * (vl + vr);
  const double omega = (vr - vl) / cfg.wheel_base_m;
  const double h0 = s.pose.heading;
  if (omega == 0.0) {
    s.pose.x += lin * dt * std::cos(h0);
    s.pose.y += lin * dt * std::sin(h0);
  } else {
    // Exact arc about the instantaneous center of rotation.
    const double h1 = h0 + omega * dt;
    const double r = lin / omega;
    s.pose.x += r * (std::sin(h1) - std::sin(h0));
    s.pose.y -= r * (std::cos(h1) - std::cos(h0));
    s.pose.heading = h1;
  }
  return s;
}

}  // namespace beamlink::robot
