#pragma once

// Closed-loop orchestrator: camera capture, tag detection, triangulation,
// calibrated steering, mirror slew, FSK link and robot on one fixed tick.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "beamlink/calib.hpp"
#include "beamlink/fsk.hpp"
#include "beamlink/optosim.hpp"
#include "beamlink/robot.hpp"
#include "beamlink/tracker.hpp"

namespace beamlink::runtime {

using geom::Vec2;
using geom::Vec3;

struct LoopConfig {
  double camera_rate_hz = 60.0;
  double processing_latency_s = 0.020;
  double mirror_rate_hz = 300.0;
  double dt = 1.0 / 1200.0;
  std::uint64_t seed = 1;
  int roi_px = 64;                 // tracking window; 0 reads the full frame every time
  double lost_timeout_s = 0.5;     // no detection for this long counts as one TrackingLost event
  double lost_fatal_s = 5.0;       // throws TrackingLost after this long
  bool instantaneous_mirror = false;
  int log_every_ticks = 1;

  /// Camera at tick rate, zero latency, mirror updated and settled every tick.
  static LoopConfig ideal();
  /// Throws ConfigError when a component period is not a whole number of ticks.
  void validate() const;
  int camera_ticks() const;
  int mirror_ticks() const;
  int latency_ticks() const;
};

/// Ground truth the loop runs against.
struct VirtualRig {
  geom::StereoRig cameras = optosim::default_stereo_rig();
  optosim::SteeringDeviceConfig device = optosim::default_device_config();
  optosim::LaserBeam beam;
  optosim::ImagingConfig imaging;
  tracker::TrackerConfig tracker;
  optosim::SimScene scene;
  fsk::FskConfig fsk;
  fsk::ChannelConfig channel;
  robot::RobotConfig robot;
  double robot_radius_m = 0.0125;
};

/// What the controller knows: its stereo model and the steering calibration.
struct Controller {
  geom::StereoRig stereo;
  calib::SteeringCalibration calibration;
};

/// Sensor pose presented to the loop: cell center and outward normal.
struct TargetState {
  Vec3 cell = Vec3::Zero();
  Vec3 normal = Vec3(0.0, 0.0, -1.0);
};

using TargetMotion = std::function<TargetState(double t)>;

struct TimedCommand {
  double t = 0.0;  // slot start time
  fsk::Symbol cmd = 'F';
};

struct CommandTrace {
  std::vector<TimedCommand> commands;
  /// Command in force at time t (the latest entry at or before t), 'F' before the first.
  fsk::Symbol at(double t) const;
};

CommandTrace read_trace(const std::filesystem::path& path);
void write_trace(const CommandTrace& trace, const std::filesystem::path& path);

/// Ground-plane polyline with arc-length queries.
struct Polyline {
  std::vector<Vec2> points;

  double length() const;
  /// Arc length of the closest point and the signed lateral offset (left positive).
  std::pair<double, double> project(const Vec2& p) const;
  Vec2 point_at(double s) const;
  Vec2 tangent_at(double s) const;
  /// Copy shifted sideways by `offset` (left positive).
  Polyline shifted(double offset) const;
};

enum class ScenarioKind { GridTest, VelocitySweep, PathFollow, ObstacleAvoid, Custom };

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& s);

struct Scenario {
  ScenarioKind kind = ScenarioKind::Custom;
  std::string name = "custom";
  double duration_s = 60.0;
  robot::Pose2 start;
  double initial_energy_mj = 0.0;
  std::vector<optosim::Obstacle> obstacles;
  std::optional<Polyline> reference;  // path the offset metric is measured against
  double offset_scale_m = 0.1;        // normalizes lateral offsets
  std::optional<Polyline> pilot_route;
  CommandTrace trace;
  bool interactive = false;

  /// Throws InvalidScenario.
  void validate(const optosim::SimScene& scene) const;
};

Scenario path_follow_scenario();
/// variant: "forward", "left" or "right".
Scenario obstacle_scenario(const std::string& variant);
/// pathFollow, obstacleForward, obstacleLeft or obstacleRight.
Scenario named_scenario(const std::string& name);

struct RunRow {
  double t = 0.0;
  robot::Pose2 robot;
  Vec2 beam = Vec2::Zero();  // beam hit on the tag plane
  double irradiance = 0.0;   // mW/cm^2 on the cell
  double energy_mj = 0.0;
  robot::Mode mode = robot::Mode::Charging;
  fsk::Symbol tx = 'F';
  fsk::Symbol rx = 0;        // 0 except on the tick a slot is decoded
  double snr_db = 0.0;
};

struct RunLog {
  std::vector<RunRow> rows;

  static const char* csv_header();
  void write_csv(const std::filesystem::path& path) const;
  void write_jsonl(const std::filesystem::path& path) const;
};

struct RunSummary {
  std::string scenario;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
  bool collision = false;
  bool left_testbed = false;
  robot::Pose2 final_pose;
  double distance_m = 0.0;
  double mean_speed_cm_s = 0.0;
  double median_irradiance = 0.0;
  std::size_t symbols_sent = 0;
  std::size_t symbol_errors = 0;
  std::size_t tracking_lost_events = 0;
  std::optional<double> initial_offset;
  std::optional<double> median_offset;
  std::optional<double> mean_offset;

  std::string to_json() const;
};

struct Snapshot {
  double t = 0.0;
  robot::Pose2 robot;
  Vec2 beam = Vec2::Zero();
  double irradiance = 0.0;
  double energy_mj = 0.0;
  fsk::Symbol rx = 0;  // last decoded symbol
  double snr_db = 0.0;
};

/// Decides the next command at each symbol slot from the true robot pose.
using Pilot = std::function<fsk::Symbol(double t, const robot::RobotState&)>;

struct PilotConfig {
  double lookahead_m = 0.05;
  double deadband_rad = 0.12;
};

/// Pure-pursuit operator along a route.
Pilot route_pilot(Polyline route, PilotConfig cfg = {});

class Simulation {
 public:
  /// Robot scenario: the tag rides on the robot.
  Simulation(const VirtualRig& rig, const Controller& controller, const LoopConfig& loop, Scenario scenario);
  /// Scripted target with no robot and an unmodulated laser.
  Simulation(const VirtualRig& rig, const Controller& controller, const LoopConfig& loop, TargetMotion motion);

  void set_pilot(Pilot pilot) { pilot_ = std::move(pilot); }
  /// Interactive command, transmitted from the next free slot.
  void enqueue(fsk::Symbol cmd);

  void step();
  double time() const;
  std::uint64_t tick() const { return tick_; }
  bool finished() const;

  const RunRow& last_row() const { return row_; }
  Snapshot snapshot() const;
  const robot::RobotState& robot_state() const { return robot_; }
  const optosim::SteeringDevice& device() const { return device_; }
  TargetState target() const;
  const CommandTrace& issued() const { return issued_; }
  std::size_t tracking_lost_events() const { return lost_events_; }
  std::size_t symbols_sent() const { return symbols_sent_; }
  std::size_t symbol_errors() const { return symbol_errors_; }
  bool collided() const { return collided_; }
  bool left_testbed() const { return left_testbed_; }
  double beam_error_m() const;  // beam distance from the cell

 private:
  struct Pending {
    std::uint64_t ready_tick;
    optosim::Drive drive;
  };

  void init();
  void capture();
  std::optional<Vec2> detect(const geom::Camera& cam, const std::optional<Vec2>& predicted, std::uint64_t seed,
                             int stream);
  void start_slot();
  void end_slot();
  void check_collision();

  VirtualRig rig_;
  Controller controller_;
  LoopConfig loop_;
  Scenario scenario_;
  TargetMotion motion_;
  bool robot_mode_ = false;

  optosim::SteeringDevice device_;
  robot::RobotState robot_;
  fsk::ReceiverChannel channel_;
  Pilot pilot_;
  std::deque<fsk::Symbol> queue_;
  CommandTrace issued_;

  std::uint64_t tick_ = 0;
  std::uint64_t frame_ = 0;
  std::deque<Pending> pending_;
  std::optional<optosim::Drive> latched_;
  std::optional<Vec2> last_left_, last_right_;
  std::uint64_t last_detection_tick_ = 0;
  bool lost_reported_ = false;
  std::size_t lost_events_ = 0;

  int ticks_per_slot_ = 0;
  int ticks_per_adc_ = 0;
  std::vector<std::vector<double>> slot_wave_;  // per alphabet entry, tick-rate multipliers
  std::size_t tx_index_ = 0;
  fsk::Symbol tx_ = 'F';
  fsk::Symbol current_cmd_ = 'F';
  std::vector<double> adc_buf_;
  fsk::Symbol last_rx_ = 0;
  std::size_t symbols_sent_ = 0;
  std::size_t symbol_errors_ = 0;

  bool collided_ = false;
  bool left_testbed_ = false;
  RunRow row_;
};

struct ScenarioResult {
  RunLog log;
  RunSummary summary;
  CommandTrace trace;  // commands as issued, replayable
};

/// Runs to completion. With a pilot route and an empty trace the pilot
/// drives; otherwise the trace is replayed.
ScenarioResult run_scenario(const VirtualRig& rig, const Controller& controller, const LoopConfig& loop,
                            const Scenario& scenario);

struct GridTestConfig {
  std::vector<double> depths{0.7, 1.0, 1.3};
  double spacing_m = 0.24;
  int trials = 3;
  double settle_s = 0.25;
  double measure_s = 0.10;
};

struct GridPoint {
  double depth = 0.0;
  Vec3 position = Vec3::Zero();
  std::vector<double> trials;  // mean irradiance per trial
  double mean = 0.0;
};

struct GridTestResult {
  std::vector<GridPoint> points;
  double mean = 0.0;
  double stddev = 0.0;
  std::vector<double> depth_stddev;

  double relative_stddev() const { return mean > 0.0 ? stddev / mean : 0.0; }
};

/// The eight grid positions around the device axis at one depth.
std::vector<Vec3> grid_points(const geom::SteeringPose& device, double depth, double spacing);
/// Throws UnreachablePoint when the point lies outside the steering range.
void check_reachable(const VirtualRig& rig, const Controller& controller, const Vec3& point);

GridTestResult grid_test(const VirtualRig& rig, const Controller& controller, const LoopConfig& loop,
                         const GridTestConfig& cfg = {});

struct VelocitySweepConfig {
  double arm_length_m = 0.02;
  double depth_m = 1.3;
  std::vector<double> speeds_cm_s{0.3, 1.0, 2.0, 4.0, 6.0, 8.7};
  double rotations = 10.0;
  double warmup_s = 0.5;
  // A point-sampled tophat shows no loss for offsets inside its radius.
  optosim::BeamProfile profile = optosim::BeamProfile::Gaussian;
};

struct SpeedResult {
  double speed_cm_s = 0.0;
  double median = 0.0;
  double p10 = 0.0;
  double p90 = 0.0;
  std::size_t samples = 0;
};

struct VelocitySweepResult {
  std::vector<SpeedResult> speeds;
  double drop_fraction() const;  // slowest vs fastest median
};

VelocitySweepResult velocity_sweep(const VirtualRig& rig, const Controller& controller, const LoopConfig& loop,
                                   const VelocitySweepConfig& cfg = {});

double median(std::vector<double> v);
double percentile(std::vector<double> v, double q);

}  // namespace beamlink::runtime
