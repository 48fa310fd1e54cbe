// beamlink: calibration, experiments, simulation and the interactive service.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "beamlink/calib.hpp"
#include "beamlink/calib_io.hpp"
#include "beamlink/config.hpp"
#include "beamlink/error.hpp"
#include "beamlink/fsk.hpp"
#include "beamlink/optosim.hpp"
#include "beamlink/rng.hpp"
#include "beamlink/runtime.hpp"
#include "beamlink/service.hpp"
#include "beamlink/session_sim.hpp"
#include "beamlink/tracker.hpp"

namespace fs = std::filesystem;
using namespace beamlink;
using nlohmann::json;

namespace {

enum Exit : int {
  kOk = 0,
  kUsage = 1,        // bad arguments, unknown or invalid config key, invalid scenario
  kParse = 2,        // malformed JSON input (config, session, trace)
  kStage1 = 3,       // calibration stage 1: stereo localization
  kStage2 = 4,       // calibration stage 2: device pose
  kStage3 = 5,       // calibration stage 3: angle-to-drive mapping
  kCalibration = 6,  // calibration file missing or invalid
  kRuntime = 7,      // any other runtime failure
};

struct CalibrationUnavailable : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  bool emit_plots = false;
  std::string calibration;

  config::AppConfig load() const {
    auto overrides = sets;
    if (seed) overrides.push_back("seed=" + std::to_string(*seed));
    return config::load(config.empty() ? std::nullopt : std::optional<fs::path>(config), overrides);
  }
  fs::path run_dir(const std::string& name) const { return fs::path(out) / "runs" / name; }
};

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::ConfigError, "cannot write " + path.string());
  return f;
}

void write_text(const fs::path& path, const std::string& text) { open_out(path) << text << '\n'; }

runtime::Controller load_controller(const Common& common, const config::AppConfig& cfg) {
  const fs::path path = common.calibration.empty() ? fs::path(common.out) / "calibration.json" : fs::path(common.calibration);
  if (!fs::exists(path)) {
    throw CalibrationUnavailable("calibration file " + path.string() + " not found; run `beamlink calibrate` first");
  }
  try {
    const auto file = calib::read_calibration(path);
    return {file.stereo.value_or(cfg.rig.cameras), file.calibration};
  } catch (const Error& e) {
    throw CalibrationUnavailable("calibration file " + path.string() + " is invalid: " + e.what());
  }
}

int cmd_calibrate(const Common& common, const std::string& session_arg, const std::string& save_session) {
  const auto cfg = common.load();
  calib::CalibrationSession session;
  const std::string session_path = session_arg.empty() ? cfg.session_path : session_arg;
  if (!session_path.empty()) {
    session = calib::read_session(session_path);
    std::printf("session: %s\n", session_path.c_str());
  } else {
    optosim::SteeringDevice device(cfg.rig.device);
    const auto sim = calib::simulate_session(cfg.rig.cameras, device, cfg.session, derive_seed(cfg.seed, 0xCA1),
                                             cfg.rig.imaging, cfg.rig.beam, cfg.rig.tracker);
    session = sim.session;
    std::printf("session: simulated, %zu boards, %zu spiral samples, %zu missed\n", session.boards.size(),
                session.spiral.size(), sim.missed);
  }
  if (!save_session.empty()) calib::write_session(session, save_session);

  const auto result = calib::calibrate(session, cfg.calib);
  const auto& d = result.diagnostics;
  std::printf("stage 1 stereo localization: ok\n");
  std::printf("stage 2 rotation: surface rms xz %.3g yz %.3g m, axis line rms %.3g m, max axis dot %.3g\n",
              d.rotation.surface_xz_rms, d.rotation.surface_yz_rms, d.rotation.axis_line_rms, d.rotation.max_axis_dot);
  std::printf("stage 2 translation: %zu beams, line rms %.3g m, bundle rms %.3g m\n", d.beam_groups, d.beam_line_rms,
              d.beam_bundle_rms);
  std::printf("stage 3 mapping: rms %.3g drive units\n", d.mapping_rms);
  const fs::path out = fs::path(common.out) / "calibration.json";
  calib::write_calibration({result, session.rig}, out);
  std::printf("wrote %s\n", out.string().c_str());
  return kOk;
}

int cmd_grid_test(const Common& common) {
  const auto cfg = common.load();
  const auto controller = load_controller(common, cfg);
  const auto r = runtime::grid_test(cfg.rig, controller, cfg.loop, cfg.grid);
  const auto dir = common.run_dir("grid_test");
  auto csv = open_out(dir / "results.csv");
  csv << "depth_m,point,x_m,y_m,z_m,irradiance_mw_cm2,trial_stddev_mw_cm2\n";
  std::vector<int> index(cfg.grid.depths.size(), 0);
  for (const auto& p : r.points) {
    int k = 0;
    for (std::size_t i = 0; i < cfg.grid.depths.size(); ++i) {
      if (cfg.grid.depths[i] == p.depth) k = index[i]++;
    }
    double var = 0.0;
    for (double t : p.trials) var += (t - p.mean) * (t - p.mean);
    const double sd = p.trials.size() > 1 ? std::sqrt(var / static_cast<double>(p.trials.size() - 1)) : 0.0;
    csv << num(p.depth) << ',' << k << ',' << num(p.position.x()) << ',' << num(p.position.y()) << ','
        << num(p.position.z()) << ',' << num(p.mean) << ',' << num(sd) << '\n';
  }
  json depth_sd = json::array();
  for (double v : r.depth_stddev) depth_sd.push_back(v);
  write_text(dir / "summary.json", json{{"schemaVersion", 1},
                                        {"seed", cfg.seed},
                                        {"points", r.points.size()},
                                        {"meanMwCm2", r.mean},
                                        {"stddevMwCm2", r.stddev},
                                        {"relativeStddev", r.relative_stddev()},
                                        {"depthsM", cfg.grid.depths},
                                        {"depthStddevMwCm2", depth_sd}}
                                       .dump(2));
  if (common.emit_plots) {
    auto dat = open_out(fs::path(common.out) / "plots" / "grid_test.dat");
    dat << "# depth_m x_m y_m irradiance_mw_cm2\n";
    for (const auto& p : r.points) {
      dat << num(p.depth) << ' ' << num(p.position.x()) << ' ' << num(p.position.y()) << ' ' << num(p.mean) << '\n';
    }
  }
  std::printf("grid test: %zu points, mean %.2f mW/cm^2, std %.3f (%.2f%%)\n", r.points.size(), r.mean, r.stddev,
              100.0 * r.relative_stddev());
  return kOk;
}

int cmd_velocity_sweep(const Common& common) {
  const auto cfg = common.load();
  const auto controller = load_controller(common, cfg);
  const auto r = runtime::velocity_sweep(cfg.rig, controller, cfg.loop, cfg.velocity);
  const auto dir = common.run_dir("velocity_sweep");
  auto csv = open_out(dir / "results.csv");
  csv << "speed_cm_s,median_mw_cm2,p10_mw_cm2,p90_mw_cm2,samples\n";
  for (const auto& s : r.speeds) {
    csv << num(s.speed_cm_s) << ',' << num(s.median) << ',' << num(s.p10) << ',' << num(s.p90) << ',' << s.samples
        << '\n';
  }
  write_text(dir / "summary.json", json{{"schemaVersion", 1},
                                        {"seed", cfg.seed},
                                        {"armLengthM", cfg.velocity.arm_length_m},
                                        {"dropFraction", r.drop_fraction()}}
                                       .dump(2));
  if (common.emit_plots) {
    auto dat = open_out(fs::path(common.out) / "plots" / "velocity_sweep.dat");
    dat << "# speed_cm_s median p10 p90\n";
    for (const auto& s : r.speeds) {
      dat << num(s.speed_cm_s) << ' ' << num(s.median) << ' ' << num(s.p10) << ' ' << num(s.p90) << '\n';
    }
  }
  for (const auto& s : r.speeds) std::printf("  %5.2f cm/s  median %.2f mW/cm^2\n", s.speed_cm_s, s.median);
  std::printf("velocity sweep: drop %.2f%%\n", 100.0 * r.drop_fraction());
  return kOk;
}

int cmd_ber_sweep(const Common& common) {
  const auto cfg = common.load();
  fsk::FskConfig fsk = cfg.rig.fsk;
  fsk.alphabet = fsk::SymbolAlphabet::binary();
  const auto r = fsk::ber_sweep(cfg.ber.snr_db, cfg.ber.bits_per_point, cfg.seed, fsk, cfg.rig.channel);
  const auto dir = common.run_dir("ber_sweep");
  auto csv = open_out(dir / "results.csv");
  csv << "snr_db,bits,errors,ber,ci_low,ci_high\n";
  for (const auto& p : r.points) {
    csv << num(p.snr_db) << ',' << p.result.bits_sent << ',' << p.result.bit_errors << ',' << num(p.result.ber())
        << ',' << num(p.ci_low) << ',' << num(p.ci_high) << '\n';
  }
  json summary{{"schemaVersion", 1}, {"seed", cfg.seed}, {"bitsPerPoint", cfg.ber.bits_per_point}, {"fitValid", r.fit.valid}};
  if (r.fit.valid) {
    summary["fitSlope"] = r.fit.slope;
    summary["fitOffset"] = r.fit.offset;
    summary["preFecCrossingSnrDb"] = r.fit.crossing_snr_db(fsk::kPreFecBer);
  }
  write_text(dir / "summary.json", summary.dump(2));
  if (common.emit_plots) {
    auto dat = open_out(fs::path(common.out) / "plots" / "ber_sweep.dat");
    dat << "# snr_db ber ci_low ci_high fit\n";
    for (const auto& p : r.points) {
      dat << num(p.snr_db) << ' ' << num(p.result.ber()) << ' ' << num(p.ci_low) << ' ' << num(p.ci_high) << ' '
          << num(r.fit.valid ? r.fit.predict(p.snr_db) : std::nan("")) << '\n';
    }
  }
  for (const auto& p : r.points) std::printf("  %6.2f dB  ber %.5f\n", p.snr_db, p.result.ber());
  if (r.fit.valid) std::printf("ber sweep: pre-FEC crossing %.2f dB\n", r.fit.crossing_snr_db(fsk::kPreFecBer));
  return kOk;
}

int cmd_simulate(const Common& common, const std::string& trace_path) {
  const auto cfg = common.load();
  const auto controller = load_controller(common, cfg);
  auto scenario = runtime::named_scenario(cfg.simulate.scenario);
  if (cfg.simulate.duration_s > 0.0) scenario.duration_s = cfg.simulate.duration_s;
  if (!trace_path.empty()) scenario.trace = runtime::read_trace(trace_path);
  const auto r = runtime::run_scenario(cfg.rig, controller, cfg.loop, scenario);
  const auto dir = common.run_dir(scenario.name);
  r.log.write_csv(dir / "log.csv");
  r.log.write_jsonl(dir / "log.jsonl");
  write_text(dir / "summary.json", r.summary.to_json());
  runtime::write_trace(r.trace, dir / "trace.json");
  if (common.emit_plots) {
    auto dat = open_out(fs::path(common.out) / "plots" / (scenario.name + "_trajectory.dat"));
    dat << "# time_s robot_x_m robot_y_m beam_x_m beam_y_m irradiance_mw_cm2\n";
    for (const auto& row : r.log.rows) {
      dat << num(row.t) << ' ' << num(row.robot.x) << ' ' << num(row.robot.y) << ' ' << num(row.beam.x()) << ' '
          << num(row.beam.y()) << ' ' << num(row.irradiance) << '\n';
    }
  }
  const auto& s = r.summary;
  std::printf("%s: collision %s, distance %.3f m, %zu symbols, %zu errors", s.scenario.c_str(),
              s.collision ? "true" : "false", s.distance_m, s.symbols_sent, s.symbol_errors);
  if (s.median_offset) std::printf(", offset %.3f -> %.3f (median)", s.initial_offset.value_or(0.0), *s.median_offset);
  std::printf("\nwrote %s\n", dir.string().c_str());
  return kOk;
}

int cmd_serve(const Common& common) {
  const auto cfg = common.load();
  const auto controller = load_controller(common, cfg);
  service::SimulationHost host(cfg.rig, controller, cfg.loop, cfg.service.scenario);
  service::Server server(host, cfg.service);
  std::printf("serving http://%s:%u/ (WebSocket /ws, POST /api/scenario)\n", cfg.service.host.c_str(), server.port());
  std::fflush(stdout);
  server.run(true);
  return kOk;
}

int cmd_render_debug(const Common& common) {
  const auto cfg = common.load();
  const auto [left, right] = optosim::render_stereo_pair(cfg.rig.scene, cfg.rig.cameras, cfg.rig.imaging,
                                                         derive_seed(cfg.seed, 0xDEB));
  const fs::path dir = fs::path(common.out) / "debug";
  fs::create_directories(dir);
  for (const auto& [name, img] : {std::pair{"left", &left}, std::pair{"right", &right}}) {
    optosim::write_pgm(*img, dir / (std::string(name) + ".pgm"));
    const auto blob = tracker::detect_tag(*img, cfg.rig.tracker);
    tracker::write_mask_pgm(*img, tracker::otsu_threshold(tracker::Histogram256::of(*img)), dir / (std::string(name) + "_mask.pgm"));
    if (blob) {
      std::printf("%s: tag at (%.2f, %.2f) px, area %d\n", name, blob->centroid.x(), blob->centroid.y(), blob->area);
    } else {
      std::printf("%s: no tag detected\n", name);
    }
  }
  std::printf("wrote %s\n", dir.string().c_str());
  return kOk;
}

std::string key_listing() {
  std::string s = "Config override keys (--set key=value):\n";
  for (const auto& k : config::list_keys()) {
    s += "  " + k.key + " <" + k.type + "> = " + k.default_value + "\n";
  }
  return s;
}

int run(int argc, char** argv) {
  CLI::App app{"beamlink: laser power delivery and communication simulator"};
  app.require_subcommand(1);
  app.footer(key_listing());
  Common common;
  std::string session_arg, save_session, trace_path;
  bool schema = false;

  auto add_common = [&](CLI::App* sub, bool needs_calibration) {
    sub->add_option("-c,--config", common.config, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("-o,--out", common.out, "output directory")->capture_default_str();
    sub->add_option("--seed", common.seed, "master seed (default " + std::to_string(config::kDefaultSeed) + ")");
    sub->add_option("--set", common.sets, "config override key=value (repeatable)");
    sub->add_flag("--emit-plots", common.emit_plots, "also write gnuplot data files under <out>/plots");
    if (needs_calibration) {
      sub->add_option("--calibration", common.calibration, "calibration file (default <out>/calibration.json)");
    }
    sub->footer(key_listing());
  };

  auto* calibrate = app.add_subcommand("calibrate", "recover the steering device pose and mapping");
  add_common(calibrate, false);
  calibrate->add_option("--session", session_arg, "recorded session (JSON lines); default simulates one");
  calibrate->add_option("--save-session", save_session, "write the session used to this file");
  auto* grid = app.add_subcommand("grid-test", "irradiance uniformity over the 8-point grid at each depth");
  add_common(grid, true);
  auto* velocity = app.add_subcommand("velocity-sweep", "irradiance on a rotating arm versus tangential speed");
  add_common(velocity, true);
  auto* ber = app.add_subcommand("ber-sweep", "bit error rate versus SNR for the binary alphabet");
  add_common(ber, false);
  auto* simulate = app.add_subcommand("simulate", "run a robot scenario (pilot or trace replay)");
  add_common(simulate, true);
  simulate->add_option("--trace", trace_path, "command trace to replay")->check(CLI::ExistingFile);
  auto* serve = app.add_subcommand("serve", "interactive service: WebSocket, static console, scenario API");
  add_common(serve, true);
  auto* render = app.add_subcommand("render-debug", "dump the stereo pair and tag masks as PGM");
  add_common(render, false);
  auto* cfgcmd = app.add_subcommand("config", "print the effective configuration");
  add_common(cfgcmd, false);
  cfgcmd->add_flag("--schema", schema, "print the key table as markdown instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*calibrate) return cmd_calibrate(common, session_arg, save_session);
    if (*grid) return cmd_grid_test(common);
    if (*velocity) return cmd_velocity_sweep(common);
    if (*ber) return cmd_ber_sweep(common);
    if (*simulate) return cmd_simulate(common, trace_path);
    if (*serve) return cmd_serve(common);
    if (*render) return cmd_render_debug(common);
    if (*cfgcmd) {
      std::cout << (schema ? config::schema_markdown() : config::to_json(common.load()) + "\n");
      return kOk;
    }
  } catch (const calib::StageFailure& e) {
    std::fprintf(stderr, "calibration stage %d failed: %s\n", e.stage(), e.what());
    return kStage1 + e.stage() - 1;
  } catch (const CalibrationUnavailable& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kCalibration;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    switch (e.code()) {
      case ErrorCode::ConfigError:
      case ErrorCode::InvalidScenario:
      case ErrorCode::NyquistViolation:
        return kUsage;
      case ErrorCode::ParseError:
        return kParse;
      default:
        return kRuntime;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
