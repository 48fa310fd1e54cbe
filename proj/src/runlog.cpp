#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "beamlink/error.hpp"
#include "beamlink/runtime.hpp"

namespace beamlink::runtime {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string sym(fsk::Symbol s) { return s ? std::string(1, s) : std::string(); }

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::ConfigError, "cannot write " + path.string());
  return f;
}

}  // namespace

const char* RunLog::csv_header() {
  return "time_s,robot_x_m,robot_y_m,robot_heading_rad,beam_x_m,beam_y_m,irradiance_mw_cm2,cap_energy_mj,mode,tx,rx,"
         "snr_db";
}

void RunLog::write_csv(const std::filesystem::path& path) const {
  auto f = open_out(path);
  f << csv_header() << '\n';
  for (const auto& r : rows) {
    f << fmt(r.t) << ',' << fmt(r.robot.x) << ',' << fmt(r.robot.y) << ',' << fmt(r.robot.heading) << ','
      << fmt(r.beam.x()) << ',' << fmt(r.beam.y()) << ',' << fmt(r.irradiance) << ',' << fmt(r.energy_mj) << ','
      << robot::to_string(r.mode) << ',' << sym(r.tx) << ',' << sym(r.rx) << ',' << fmt(r.snr_db) << '\n';
  }
}

void RunLog::write_jsonl(const std::filesystem::path& path) const {
  auto f = open_out(path);
  for (const auto& r : rows) {
    json j{{"t", r.t},
           {"robot", {{"x", r.robot.x}, {"y", r.robot.y}, {"heading", r.robot.heading}}},
           {"beam", {{"x", finite_or_null(r.beam.x())}, {"y", finite_or_null(r.beam.y())}}},
           {"irradiance", r.irradiance},
           {"energyMj", r.energy_mj},
           {"mode", robot::to_string(r.mode)},
           {"tx", sym(r.tx)},
           {"rx", sym(r.rx)},
           {"snrDb", finite_or_null(r.snr_db)}};
    f << j.dump() << '\n';
  }
}

std::string RunSummary::to_json() const {
  json j{{"schemaVersion", 1},
         {"scenario", scenario},
         {"seed", seed},
         {"durationS", duration_s},
         {"collision", collision},
         {"leftTestbed", left_testbed},
         {"finalPose", {{"x", final_pose.x}, {"y", final_pose.y}, {"heading", final_pose.heading}}},
         {"distanceM", distance_m},
         {"meanSpeedCmS", mean_speed_cm_s},
         {"medianIrradiance", finite_or_null(median_irradiance)},
         {"symbolsSent", symbols_sent},
         {"symbolErrors", symbol_errors},
         {"trackingLostEvents", tracking_lost_events}};
  if (initial_offset) j["initialOffset"] = *initial_offset;
  if (median_offset) j["medianOffset"] = *median_offset;
  if (mean_offset) j["meanOffset"] = *mean_offset;
  return j.dump(2);
}

CommandTrace read_trace(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::ParseError, "cannot read trace " + path.string());
  CommandTrace trace;
  try {
    const json j = json::parse(f);
    for (const auto& c : j.at("commands")) {
      const std::string cmd = c.at("cmd").get<std::string>();
      if (cmd.size() != 1 || !fsk::SymbolAlphabet::steering().contains(cmd[0])) {
        throw Error(ErrorCode::ParseError, "trace " + path.string() + ": unknown command '" + cmd + "'");
      }
      const double t = c.at("t").get<double>();
      if (!std::isfinite(t) || t < 0.0 || (!trace.commands.empty() && t < trace.commands.back().t)) {
        throw Error(ErrorCode::ParseError, "trace " + path.string() + ": times must be non-negative and ordered");
      }
      trace.commands.push_back({t, cmd[0]});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("trace ") + path.string() + ": " + e.what());
  }
  return trace;
}

void write_trace(const CommandTrace& trace, const std::filesystem::path& path) {
  json cmds = json::array();
  for (const auto& c : trace.commands) cmds.push_back({{"t", c.t}, {"cmd", std::string(1, c.cmd)}});
  auto f = open_out(path);
  f << json{{"schemaVersion", 1}, {"commands", cmds}}.dump(2) << '\n';
}

}  // namespace beamlink::runtime
