#pragma once

// Energy-harvesting differential-drive robot: solar cell, storage capacitor
// with hysteretic discharge, single- or dual-motor locomotion.

#include <string_view>

#include "beamlink/fsk.hpp"

namespace beamlink::robot {

struct Pose2 {
  double x = 0.0;        // m
  double y = 0.0;        // m
  double heading = 0.0;  // rad, CCW from +x
};

enum class Mode { Charging, Discharging };
enum class Routing { Both, RightOnly, LeftOnly };
enum class LightSource { Laser, Diffuse };

std::string_view to_string(Mode m);

struct EnergyLedger {
  double harvested_mj = 0.0;
  double consumed_mj = 0.0;
  double spilled_mj = 0.0;  // harvest lost with the capacitor full
  double deficit_mj = 0.0;  // demand the empty capacitor could not meet
};

struct RobotState {
  Pose2 pose;
  double energy_mj = 0.0;
  Mode mode = Mode::Charging;
  Routing routing = Routing::Both;
  fsk::Symbol last_command = 'F';
  EnergyLedger ledger;
};

struct RobotConfig {
  double cell_area_cm2 = 1.84;
  double harvest_efficiency = 0.060;         // fitted: laser anchor
  double diffuse_efficiency_factor = 0.56;   // fitted: broadband light relative to the laser line
  double capacity_mj = 50.0;
  double discharge_threshold_mj = 20.0;
  double stop_threshold_mj = 5.0;
  double supply_voltage_v = 3.0;
  double locomotion_current_ma = 4.5;  // both motors
  double wheel_speed_cm_s = 1.2;       // per driven wheel while discharging
  double wheel_base_m = 0.02;
  bool decoding_enabled = true;
  double adc_rate_hz = 100.0;

  double motor_power_mw() const { return locomotion_current_ma * supply_voltage_v; }
  double decode_current_ma() const;
  double decode_power_mw() const { return decode_current_ma() * supply_voltage_v; }
  /// Throws ConfigError on unordered thresholds or negative rates.
  void validate() const;
};

/// Current draw (mA) in a given mode and routing.
double total_current_ma(const RobotConfig& cfg, Mode mode, Routing routing);

/// Harvested electrical power (mW) for irradiance in mW/cm^2.
double harvested_power_mw(const RobotConfig& cfg, double irradiance, double incidence_rad,
                          LightSource source = LightSource::Laser);

/// Steady-state mean speed (cm/s) under constant light, from the duty cycle
/// of the charge/discharge loop.
double steady_state_speed_cm_s(const RobotConfig& cfg, double irradiance, LightSource source = LightSource::Laser);

/// Charges with harvested power and pays decode and motor draw over dt.
RobotState harvest_step(RobotState s, const RobotConfig& cfg, double irradiance, double incidence_rad, double dt,
                        LightSource source = LightSource::Laser);

/// Routes discharge: F both motors, L right motor, R left motor. Throws UnknownSymbol.
RobotState apply_command(RobotState s, fsk::Symbol symbol);

/// Applies the mode hysteresis, then integrates the kinematics while discharging.
RobotState motion_step(RobotState s, const RobotConfig& cfg, double dt);

}  // namespace beamlink::robot
