#include "beamlink/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <Eigen/Geometry>

#include "json.hpp"

#include "beamlink/error.hpp"
#include "beamlink/optosim.hpp"

namespace beamlink::config {

namespace {

using nlohmann::json;
using geom::Vec2;

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(ErrorCode::ConfigError, "config key '" + key + "': " + why);
}

template <typename T>
struct Conv;

template <>
struct Conv<double> {
  static constexpr const char* name = "number";
  static json to(double v) { return v; }
  static double from(const json& j, const std::string& key) {
    if (!j.is_number()) bad(key, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) bad(key, "must be finite");
    return v;
  }
};

template <>
struct Conv<int> {
  static constexpr const char* name = "integer";
  static json to(int v) { return v; }
  static int from(const json& j, const std::string& key) {
    if (!j.is_number_integer()) bad(key, "expected an integer");
    const auto v = j.get<std::int64_t>();
    if (v < INT32_MIN || v > INT32_MAX) bad(key, "integer out of range");
    return static_cast<int>(v);
  }
};

template <>
struct Conv<std::uint64_t> {
  static constexpr const char* name = "unsigned";
  static json to(std::uint64_t v) { return v; }
  static std::uint64_t from(const json& j, const std::string& key) {
    if (!j.is_number_unsigned()) bad(key, "expected a non-negative integer");
    return j.get<std::uint64_t>();
  }
};

template <>
struct Conv<bool> {
  static constexpr const char* name = "boolean";
  static json to(bool v) { return v; }
  static bool from(const json& j, const std::string& key) {
    if (!j.is_boolean()) bad(key, "expected true or false");
    return j.get<bool>();
  }
};

template <>
struct Conv<std::string> {
  static constexpr const char* name = "string";
  static json to(const std::string& v) { return v; }
  static std::string from(const json& j, const std::string& key) {
    if (!j.is_string()) bad(key, "expected a string");
    return j.get<std::string>();
  }
};

template <>
struct Conv<std::vector<double>> {
  static constexpr const char* name = "number[]";
  static json to(const std::vector<double>& v) { return v; }
  static std::vector<double> from(const json& j, const std::string& key) {
    if (!j.is_array()) bad(key, "expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : j) out.push_back(Conv<double>::from(e, key));
    return out;
  }
};

template <>
struct Conv<Vec2> {
  static constexpr const char* name = "number[2]";
  static json to(const Vec2& v) { return {v.x(), v.y()}; }
  static Vec2 from(const json& j, const std::string& key) {
    const auto v = Conv<std::vector<double>>::from(j, key);
    if (v.size() != 2) bad(key, "expected two numbers");
    return {v[0], v[1]};
  }
};

struct Entry {
  std::string key;
  std::string type;
  std::string help;
  std::function<json(const AppConfig&)> get;
  std::function<void(AppConfig&, const json&)> set;
};

template <typename T, typename Acc>
Entry field(std::string key, Acc acc, std::string help) {
  Entry e{key, Conv<T>::name, std::move(help), nullptr, nullptr};
  e.get = [acc](const AppConfig& c) { return Conv<T>::to(acc(const_cast<AppConfig&>(c))); };
  e.set = [acc, key](AppConfig& c, const json& j) { acc(c) = Conv<T>::from(j, key); };
  return e;
}

template <typename E, typename Acc>
Entry choice(std::string key, Acc acc, std::vector<std::pair<E, std::string>> names, std::string help) {
  std::string type;
  for (const auto& [_, n] : names) type += (type.empty() ? "" : "|") + n;
  Entry e{key, type, std::move(help), nullptr, nullptr};
  e.get = [acc, names](const AppConfig& c) {
    const E v = acc(const_cast<AppConfig&>(c));
    for (const auto& [value, n] : names) {
      if (value == v) return json(n);
    }
    return json(nullptr);
  };
  e.set = [acc, names, key, type](AppConfig& c, const json& j) {
    const std::string s = Conv<std::string>::from(j, key);
    for (const auto& [value, n] : names) {
      if (n == s) {
        acc(c) = value;
        return;
      }
    }
    bad(key, "expected one of " + type);
  };
  return e;
}

#define BL_FIELD(T, key, member, help) field<T>(key, [](AppConfig& c) -> T& { return c.member; }, help)
#define BL_CHOICE(E, key, member, names, help) \
  choice<E>(key, [](AppConfig& c) -> E& { return c.member; }, names, help)

const std::vector<Entry>& registry() {
  using optosim::BeamProfile;
  static const std::vector<Entry> entries = [] {
    const std::vector<std::pair<BeamProfile, std::string>> profiles{{BeamProfile::TopHat, "tophat"},
                                                                    {BeamProfile::Gaussian, "gaussian"}};
    std::vector<Entry> r{
        BL_FIELD(std::uint64_t, "seed", seed, "master seed for every random stream"),

        BL_FIELD(double, "rig.baselineM", baseline_m, "stereo baseline"),
        BL_FIELD(std::vector<double>, "device.rotationDeg", device_rotation_deg,
                 "true steering-device rotation about x, y, z (applied z*y*x)"),
        BL_FIELD(std::vector<double>, "device.translationM", device_translation_m,
                 "true steering-device origin in the stereo frame"),
        BL_FIELD(double, "device.mechanicalLimitDeg", rig.device.mechanical_limit_deg,
                 "mirror mechanical half-angle; optical limit is twice this"),
        BL_FIELD(double, "device.gain", rig.device.nonlinearity.gain, "rad per drive unit"),
        BL_FIELD(double, "device.kappa", rig.device.nonlinearity.kappa, "a-drive cross-coupling term"),
        BL_FIELD(double, "device.kappaB", rig.device.nonlinearity.kappa_b, "b-drive quadratic term"),
        BL_FIELD(double, "device.cubic", rig.device.nonlinearity.cubic, "cubic term (cubic mode only)"),
        BL_CHOICE(optosim::NonlinearityMode, "device.nonlinearity", rig.device.nonlinearity.mode,
                  (std::vector<std::pair<optosim::NonlinearityMode, std::string>>{
                      {optosim::NonlinearityMode::Quadratic, "quadratic"},
                      {optosim::NonlinearityMode::Cubic, "cubic"}}),
                  "ground-truth drive nonlinearity"),
        BL_FIELD(double, "device.slewBandwidthHz", rig.device.slew.bandwidth_hz, "mirror small-step bandwidth"),
        BL_FIELD(double, "device.maxRateRadS", rig.device.slew.max_rate_rad_s, "mirror optical rate limit"),

        BL_FIELD(double, "beam.electricalPowerW", rig.beam.electrical_power_w, "laser electrical input"),
        BL_FIELD(double, "beam.wallPlugEfficiency", rig.beam.wall_plug_efficiency,
                 "fitted so the default irradiance at 1.3 m clears 110 mW/cm^2"),
        BL_FIELD(std::vector<double>, "beam.opticalChain", rig.beam.optical_chain,
                 "per-element transmissions"),
        BL_FIELD(double, "beam.divergenceHalfAngleRad", rig.beam.divergence_half_angle, "beam divergence"),
        BL_FIELD(double, "beam.spotDiameterCm", rig.beam.spot_diameter_ref_cm, "spot diameter at the reference depth"),
        BL_FIELD(double, "beam.referenceDepthM", rig.beam.reference_depth_m, "depth of the reference spot"),
        BL_CHOICE(BeamProfile, "beam.profile", rig.beam.profile, profiles, "spot intensity profile"),

        BL_FIELD(double, "imaging.ledPowerW", rig.imaging.led_power_w, "IR LED ring power"),
        BL_FIELD(double, "imaging.ledGain", rig.imaging.led_gain, "retroreflector gray levels per W at 1 m^4"),
        BL_FIELD(double, "imaging.ambientGain", rig.imaging.ambient_gain, "background gray levels per lux"),
        BL_FIELD(double, "imaging.noiseSigma", rig.imaging.noise_sigma, "pixel noise, gray levels"),
        BL_FIELD(int, "imaging.supersample", rig.imaging.supersample, "render supersampling per axis"),
        BL_FIELD(double, "imaging.spotBrightness", rig.imaging.spot_brightness, "laser spot gray level in scans"),

        BL_FIELD(int, "tracker.minArea", rig.tracker.min_area, "smallest accepted blob, pixels"),
        BL_FIELD(double, "tracker.minClassSeparation", rig.tracker.min_class_separation,
                 "Otsu class-mean gap below which the histogram is degenerate"),

        BL_FIELD(double, "scene.ambientLux", rig.scene.ambient_lux, "room illuminance"),
        BL_FIELD(double, "scene.groundZ", rig.scene.ground_z, "ground plane depth below the cameras"),
        BL_FIELD(Vec2, "scene.testbedHalfExtentM", rig.scene.testbed_half_extent, "testbed half size"),
        BL_FIELD(double, "scene.tagOuterRadiusM", rig.scene.tag.outer_radius_m, "retroreflective ring outer radius"),
        BL_FIELD(double, "scene.tagInnerRadiusM", rig.scene.tag.inner_radius_m, "solar-cell cutout radius"),
        BL_FIELD(double, "scene.tagHeightM", rig.scene.tag.height_m, "tag plane above the ground"),

        BL_FIELD(double, "fsk.symbolDurationS", rig.fsk.symbol_duration_s, "symbol slot length"),
        BL_FIELD(double, "fsk.modulationDepth", rig.fsk.modulation_depth, "fraction of laser power modulated"),
        BL_FIELD(double, "fsk.txSampleRate", rig.fsk.tx_sample_rate, "transmit waveform sample rate"),
        BL_FIELD(double, "fsk.riseTimeS", rig.fsk.rise_time_s, "laser supply edge slew; 0 is ideal"),
        BL_FIELD(double, "fsk.adcRate", rig.fsk.adc_rate, "receiver ADC sample rate"),
        BL_FIELD(int, "fsk.adcBits", rig.fsk.adc_bits, "ADC resolution"),
        BL_FIELD(double, "fsk.adcVref", rig.fsk.adc_vref, "ADC full-scale span, volts"),
        BL_FIELD(double, "fsk.peakThresholdRatio", rig.fsk.peak_threshold_ratio,
                 "peak detection threshold as a multiple of the noise floor"),
        BL_FIELD(double, "fsk.refractoryFraction", rig.fsk.refractory_fraction,
                 "peak refractory window as a fraction of the shortest period"),

        BL_FIELD(double, "channel.resistanceOhm", rig.channel.resistance_ohm, "high-pass R"),
        BL_FIELD(double, "channel.capacitanceF", rig.channel.capacitance_f, "high-pass C"),
        BL_FIELD(double, "channel.noiseFloorMv", rig.channel.noise_floor_mv, "peak-to-peak noise floor at the ADC"),
        BL_FIELD(std::string, "channel.ambientPreset", ambient_preset,
                 "dark_4lx|office_600lx|bright_744lx|overcast_8000lx|sunlight_50000lx; overrides noiseFloorMv"),
        BL_FIELD(double, "channel.responsivityMvPerMwCm2", rig.channel.responsivity_mv_per_mw_cm2,
                 "ADC-node millivolts per unit modulated irradiance"),
        BL_FIELD(double, "channel.angular3dbDeg", rig.channel.angular_3db_deg, "incidence angle of the 3 dB drop"),
        BL_FIELD(double, "channel.angularOrder", rig.channel.angular_order, "roll-off order of the angular response"),
        BL_FIELD(bool, "channel.startAtRest", rig.channel.start_at_rest, "filter starts discharged instead of settled"),

        BL_FIELD(double, "robot.cellAreaCm2", rig.robot.cell_area_cm2, "solar cell area"),
        BL_FIELD(double, "robot.harvestEfficiency", rig.robot.harvest_efficiency, "fitted to the laser speed anchor"),
        BL_FIELD(double, "robot.diffuseEfficiencyFactor", rig.robot.diffuse_efficiency_factor,
                 "fitted to the diffuse-light speed anchor"),
        BL_FIELD(double, "robot.capacityMj", rig.robot.capacity_mj, "storage capacitor capacity"),
        BL_FIELD(double, "robot.dischargeThresholdMj", rig.robot.discharge_threshold_mj, "start moving at this energy"),
        BL_FIELD(double, "robot.stopThresholdMj", rig.robot.stop_threshold_mj, "stop moving at this energy"),
        BL_FIELD(double, "robot.supplyVoltageV", rig.robot.supply_voltage_v, "logic and motor supply"),
        BL_FIELD(double, "robot.locomotionCurrentMa", rig.robot.locomotion_current_ma, "both motors running"),
        BL_FIELD(double, "robot.wheelSpeedCmS", rig.robot.wheel_speed_cm_s, "driven wheel speed while moving"),
        BL_FIELD(double, "robot.wheelBaseM", rig.robot.wheel_base_m, "distance between wheels"),
        BL_FIELD(bool, "robot.decodingEnabled", rig.robot.decoding_enabled, "receiver ADC and decoder powered"),
        BL_FIELD(double, "robot.radiusM", rig.robot_radius_m, "collision radius"),

        BL_FIELD(double, "loop.cameraRateHz", loop.camera_rate_hz, "stereo frame rate"),
        BL_FIELD(double, "loop.processingLatencyS", loop.processing_latency_s, "frame to steering command delay"),
        BL_FIELD(double, "loop.mirrorRateHz", loop.mirror_rate_hz, "steering command update rate"),
        BL_FIELD(double, "loop.dt", loop.dt, "simulation tick"),
        BL_FIELD(int, "loop.roiPx", loop.roi_px, "tracking window size; 0 reads full frames"),
        BL_FIELD(double, "loop.lostTimeoutS", loop.lost_timeout_s, "detection gap counted as a tracking loss"),
        BL_FIELD(double, "loop.lostFatalS", loop.lost_fatal_s, "detection gap that aborts the run"),
        BL_FIELD(bool, "loop.instantaneousMirror", loop.instantaneous_mirror, "mirror settles within one tick"),
        BL_FIELD(int, "loop.logEveryTicks", loop.log_every_ticks, "run log decimation"),

        BL_FIELD(double, "calib.parallelRayAngle", calib.geom.parallel_ray_angle, "triangulation ray angle floor, rad"),
        BL_FIELD(double, "calib.bundleSingular", calib.geom.bundle_singular, "line-bundle eigenvalue floor"),
        BL_FIELD(double, "calib.degenerateAxisDot", calib.geom.degenerate_axis_dot, "quadric axis degeneracy"),
        BL_FIELD(int, "calib.intersectionGrid", calib.geom.intersection_grid, "surface intersection samples per side"),
        BL_FIELD(double, "calib.illConditionedRms", calib.geom.ill_conditioned_rms,
                 "intersection line fit RMS limit, m"),
        BL_FIELD(int, "calib.minSurfacePoints", calib.geom.min_surface_points, "points needed per quadric fit"),
        BL_FIELD(double, "calib.maxAxisDot", calib.max_axis_dot, "axis orthogonality limit before projection"),
        BL_FIELD(std::uint64_t, "calib.minBoards", calib.min_boards, "board positions required"),
        BL_FIELD(std::uint64_t, "calib.minSpiral", calib.min_spiral, "spiral samples required"),

        BL_FIELD(std::string, "session.path", session_path, "recorded session (JSON lines); empty simulates one"),
        BL_FIELD(std::vector<double>, "session.boardDepthsM", session.board_depths, "board positions"),
        BL_FIELD(std::vector<double>, "session.boardTiltsDeg", session.board_tilts_deg, "board tilt per position"),
        BL_FIELD(int, "session.axisDrives", session.axis_drives, "drive steps per axis scan"),
        BL_FIELD(double, "session.axisDriveSpan", session.axis_drive_span, "axis scans cover [-span, span]"),
        BL_FIELD(int, "session.spiralSamples", session.spiral_samples, "spiral scan length"),
        BL_FIELD(double, "session.spiralRadius", session.spiral_radius, "spiral outer drive radius"),
        BL_FIELD(double, "session.spiralTurns", session.spiral_turns, "spiral turns"),
        BL_FIELD(double, "session.spiralBoardDepthM", session.spiral_board_depth, "board depth for the spiral"),
        BL_FIELD(double, "session.spiralBoardTiltDeg", session.spiral_board_tilt_deg, "board tilt for the spiral"),
        BL_FIELD(double, "session.pixelNoisePx", session.pixel_noise_px, "gaussian pixel noise (analytic imaging)"),
        BL_FIELD(double, "session.focalPerturbation", session.focal_perturbation,
                 "relative focal error of the controller's stereo model"),
        BL_CHOICE(calib::ScanImaging, "session.imaging", session.imaging,
                  (std::vector<std::pair<calib::ScanImaging, std::string>>{
                      {calib::ScanImaging::Analytic, "analytic"}, {calib::ScanImaging::Rendered, "rendered"}}),
                  "how spot pixels are produced"),
        BL_FIELD(int, "session.renderWindowPx", session.render_window_px, "rendered crop around each spot"),
        BL_FIELD(double, "session.scanAmbientLux", session.scan_ambient_lux, "room light during scans"),

        BL_FIELD(std::vector<double>, "grid.depthsM", grid.depths, "grid test depths"),
        BL_FIELD(double, "grid.spacingM", grid.spacing_m, "grid spacing"),
        BL_FIELD(int, "grid.trials", grid.trials, "trials per point"),
        BL_FIELD(double, "grid.settleS", grid.settle_s, "lock-on time before measuring"),
        BL_FIELD(double, "grid.measureS", grid.measure_s, "averaging window"),

        BL_FIELD(double, "velocity.armLengthM", velocity.arm_length_m, "rotating arm radius"),
        BL_FIELD(double, "velocity.depthM", velocity.depth_m, "arm depth"),
        BL_FIELD(std::vector<double>, "velocity.speedsCmS", velocity.speeds_cm_s, "tangential speeds"),
        BL_FIELD(double, "velocity.rotations", velocity.rotations, "rotations measured per speed"),
        BL_FIELD(double, "velocity.warmupS", velocity.warmup_s, "lock-on time before measuring"),
        BL_CHOICE(BeamProfile, "velocity.profile", velocity.profile, profiles, "beam profile for the sweep"),

        BL_FIELD(std::vector<double>, "ber.snrDb", ber.snr_db, "SNR points"),
        BL_FIELD(std::uint64_t, "ber.bitsPerPoint", ber.bits_per_point, "bits per SNR point"),

        BL_FIELD(std::string, "simulate.scenario", simulate.scenario,
                 "pathFollow|obstacleForward|obstacleLeft|obstacleRight"),
        BL_FIELD(double, "simulate.durationS", simulate.duration_s, "run length; 0 keeps the scenario default"),

        BL_FIELD(std::string, "service.host", service.host, "listen address"),
        BL_FIELD(int, "service.port", service.port, "listen port; 0 picks a free one"),
        BL_FIELD(std::string, "service.staticDir", service.static_dir, "console assets served over HTTP"),
        BL_FIELD(double, "service.snapshotRateHz", service.snapshot_rate_hz, "state broadcast rate"),
        BL_FIELD(bool, "service.paceWallClock", service.pace_wall_clock, "run the simulation at wall-clock speed"),
        BL_FIELD(std::string, "service.scenario", service.scenario, "scene loaded on start and reset"),
    };
    return r;
  }();
  return entries;
}

#undef BL_FIELD
#undef BL_CHOICE

const Entry& find(const std::string& key) {
  for (const auto& e : registry()) {
    if (e.key == key) return e;
  }
  throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
}

void apply_tree(AppConfig& cfg, const json& node, const std::string& prefix) {
  if (!node.is_object()) {
    find(prefix).set(cfg, node);
    return;
  }
  if (node.empty() && !prefix.empty()) find(prefix);  // an empty object still names a key
  for (const auto& [k, v] : node.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) apply_tree(cfg, v, key);
    else find(key).set(cfg, v);
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ConfigError, what);
}

}  // namespace

void AppConfig::finalize() {
  require(baseline_m > 0.0, "rig.baselineM must be positive");
  require(device_rotation_deg.size() == 3, "device.rotationDeg needs three angles");
  require(device_translation_m.size() == 3, "device.translationM needs three values");
  rig.cameras = optosim::default_stereo_rig(baseline_m);
  constexpr double kDeg = 3.14159265358979323846 / 180.0;
  rig.device.pose.R = (Eigen::AngleAxisd(device_rotation_deg[2] * kDeg, geom::Vec3::UnitZ()) *
                       Eigen::AngleAxisd(device_rotation_deg[1] * kDeg, geom::Vec3::UnitY()) *
                       Eigen::AngleAxisd(device_rotation_deg[0] * kDeg, geom::Vec3::UnitX()))
                          .toRotationMatrix();
  rig.device.pose.T = geom::Vec3(device_translation_m[0], device_translation_m[1], device_translation_m[2]);
  loop.seed = seed;
  rig.robot.adc_rate_hz = rig.fsk.adc_rate;
  if (!ambient_preset.empty()) rig.channel.apply_ambient_preset(ambient_preset);

  loop.validate();
  rig.robot.validate();
  require(rig.beam.electrical_power_w > 0.0 && rig.beam.wall_plug_efficiency > 0.0 &&
              rig.beam.wall_plug_efficiency <= 1.0,
          "beam power and efficiency must be positive (efficiency at most 1)");
  for (double t : rig.beam.optical_chain) require(t > 0.0 && t <= 1.0, "beam.opticalChain entries must lie in (0, 1]");
  require(rig.beam.spot_diameter_ref_cm > 0.0 && rig.beam.reference_depth_m > 0.0, "beam spot must be positive");
  require(rig.device.mechanical_limit_deg > 0.0 && rig.device.mechanical_limit_deg < 45.0,
          "device.mechanicalLimitDeg must lie in (0, 45)");
  require(rig.device.nonlinearity.gain > 0.0, "device.gain must be positive");
  require(rig.imaging.supersample >= 1, "imaging.supersample must be at least 1");
  require(rig.tracker.min_area >= 1, "tracker.minArea must be at least 1");
  require(rig.fsk.symbol_duration_s > 0.0, "fsk.symbolDurationS must be positive");
  require(rig.fsk.modulation_depth > 0.0 && rig.fsk.modulation_depth <= 1.0, "fsk.modulationDepth must lie in (0, 1]");
  require(rig.fsk.adc_bits >= 2 && rig.fsk.adc_bits <= 24, "fsk.adcBits must lie in [2, 24]");
  require(rig.fsk.adc_rate > 0.0 && rig.fsk.tx_sample_rate > 0.0 && rig.fsk.adc_vref > 0.0,
          "fsk rates and vref must be positive");
  rig.fsk.alphabet.check_nyquist(rig.fsk.adc_rate);
  require(rig.channel.resistance_ohm > 0.0 && rig.channel.capacitance_f > 0.0, "channel R and C must be positive");
  require(rig.channel.noise_floor_mv > 0.0, "channel.noiseFloorMv must be positive");
  require(rig.robot_radius_m > 0.0, "robot.radiusM must be positive");
  require(session.axis_drives >= 2 && session.spiral_samples >= 1, "session scans need samples");
  require(session.board_tilts_deg.size() >= session.board_depths.size(),
          "session.boardTiltsDeg needs one tilt per board depth");
  require(!grid.depths.empty() && grid.trials >= 1 && grid.spacing_m > 0.0, "grid test needs depths and trials");
  require(grid.settle_s >= 0.0 && grid.measure_s > 0.0, "grid timing must be positive");
  require(!velocity.speeds_cm_s.empty(), "velocity.speedsCmS must not be empty");
  for (double v : velocity.speeds_cm_s) require(v > 0.0, "velocity.speedsCmS entries must be positive");
  require(velocity.arm_length_m > 0.0 && velocity.rotations > 0.0, "velocity arm and rotations must be positive");
  require(!ber.snr_db.empty() && ber.bits_per_point > 0, "ber sweep needs points and bits");
  require(simulate.duration_s >= 0.0, "simulate.durationS must not be negative");
  require(service.port >= 0 && service.port < 65536, "service.port out of range (0 picks a free port)");
  require(service.snapshot_rate_hz > 0.0, "service.snapshotRateHz must be positive");
  for (const auto& name : {simulate.scenario, service.scenario}) {
    require(name == "pathFollow" || name == "obstacleForward" || name == "obstacleLeft" || name == "obstacleRight",
            "unknown scenario '" + name + "'");
  }
}

std::vector<KeyInfo> list_keys() {
  const AppConfig defaults;
  std::vector<KeyInfo> out;
  for (const auto& e : registry()) out.push_back({e.key, e.type, e.get(defaults).dump(), e.help});
  return out;
}

void set_key(AppConfig& cfg, const std::string& key, const std::string& value) {
  const Entry& e = find(key);
  json j = json::parse(value, nullptr, false);
  if (j.is_discarded() || (e.type == "string" && !j.is_string())) j = value;
  e.set(cfg, j);
}

void apply_json_text(AppConfig& cfg, const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::ParseError, "config is not valid JSON");
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config root must be an object");
  apply_tree(cfg, j, "");
}

AppConfig load(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  AppConfig cfg;
  if (file) {
    std::ifstream f(*file, std::ios::binary);
    if (!f) throw Error(ErrorCode::ConfigError, "cannot read config " + file->string());
    std::stringstream ss;
    ss << f.rdbuf();
    apply_json_text(cfg, ss.str());
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::ConfigError, "override '" + kv + "' is not key=value");
    }
    set_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.finalize();
  return cfg;
}

std::string to_json(const AppConfig& cfg) {
  json j = json::object();
  for (const auto& e : registry()) {
    std::string ptr = "/" + e.key;
    for (auto& ch : ptr) {
      if (ch == '.') ch = '/';
    }
    j[json::json_pointer(ptr)] = e.get(cfg);
  }
  return j.dump(2);
}

std::string schema_markdown() {
  std::ostringstream os;
  os << "| key | type | default | description |\n|---|---|---|---|\n";
  for (const auto& k : list_keys()) {
    std::string type = k.type;
    for (std::size_t p = 0; (p = type.find('|', p)) != std::string::npos; p += 2) type.replace(p, 1, "\\|");
    std::string help = k.help;
    for (std::size_t p = 0; (p = help.find('|', p)) != std::string::npos; p += 2) help.replace(p, 1, "\\|");
    os << "| `" << k.key << "` | " << type << " | `" << k.default_value << "` | " << help << " |\n";
  }
  return os.str();
}

}  // namespace beamlink::config
