#include "beamlink/calib_io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "beamlink/error.hpp"

namespace beamlink::calib {

namespace {

using nlohmann::json;

json camera_to_json(const geom::Camera& cam) {
  const auto& k = cam.intrinsics;
  const Mat3 R = cam.pose.linear();
  const Vec3 t = cam.pose.translation();
  json rot = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rot.push_back(R(r, c));
  }
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height},
          {"R", rot}, {"t", {t.x(), t.y(), t.z()}}};
}

geom::Camera camera_from_json(const json& j) {
  geom::Camera cam;
  auto& k = cam.intrinsics;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  const auto& rot = j.at("R");
  const auto& t = j.at("t");
  if (rot.size() != 9 || t.size() != 3) throw Error(ErrorCode::ParseError, "camera pose needs R[9] and t[3]");
  Mat3 R;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) R(r, c) = rot.at(static_cast<std::size_t>(3 * r + c)).get<double>();
  }
  cam.pose = geom::Rigid::Identity();
  cam.pose.linear() = R;
  cam.pose.translation() = Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
  return cam;
}

json rig_to_json(const geom::StereoRig& rig) { return {{"left", camera_to_json(rig.left)}, {"right", camera_to_json(rig.right)}}; }

geom::StereoRig rig_from_json(const json& j) {
  geom::StereoRig rig;
  rig.left = camera_from_json(j.at("left"));
  rig.right = camera_from_json(j.at("right"));
  return rig;
}

template <std::size_t N>
std::array<double, N> fixed_array(const json& j, const char* name) {
  const auto& a = j.at(name);
  if (!a.is_array() || a.size() != N) {
    throw Error(ErrorCode::ParseError, std::string("'") + name + "' must hold " + std::to_string(N) + " numbers");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    out[i] = a[i].get<double>();
    if (!std::isfinite(out[i])) throw Error(ErrorCode::ParseError, std::string("non-finite value in '") + name + "'");
  }
  return out;
}

json observation_to_json(const Observation& o) {
  return {{"a", o.drive.a}, {"b", o.drive.b}, {"left", {o.pixel_left.x(), o.pixel_left.y()}},
          {"right", {o.pixel_right.x(), o.pixel_right.y()}}};
}

Observation observation_from_json(const json& j) {
  Observation o;
  o.drive = {j.at("a").get<double>(), j.at("b").get<double>()};
  const auto l = j.at("left"), r = j.at("right");
  if (l.size() != 2 || r.size() != 2) throw Error(ErrorCode::ParseError, "pixels must be [u, v]");
  o.pixel_left = Vec2(l[0].get<double>(), l[1].get<double>());
  o.pixel_right = Vec2(r[0].get<double>(), r[1].get<double>());
  return o;
}

template <typename F>
auto parse_guard(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, where + ": " + e.what());
  }
}

}  // namespace

std::string calibration_to_json(const CalibrationFile& file) {
  const auto& c = file.calibration;
  json R = json::array(), mA = json::array(), mB = json::array();
  for (int r = 0; r < 3; ++r) {
    for (int k = 0; k < 3; ++k) R.push_back(c.pose.R(r, k));
  }
  for (double v : c.mapping.m_a) mA.push_back(v);
  for (double v : c.mapping.m_b) mB.push_back(v);
  const auto& d = c.diagnostics;
  json j{{"schemaVersion", kCalibrationSchemaVersion},
         {"R", R},
         {"T", {c.pose.T.x(), c.pose.T.y(), c.pose.T.z()}},
         {"mA", mA},
         {"mB", mB},
         {"residuals",
          {{"surfaceXzRms", d.rotation.surface_xz_rms},
           {"surfaceYzRms", d.rotation.surface_yz_rms},
           {"axisLineRms", d.rotation.axis_line_rms},
           {"maxAxisDot", d.rotation.max_axis_dot},
           {"axisSamples", d.rotation.axis_samples},
           {"beamGroups", d.beam_groups},
           {"beamLineRms", d.beam_line_rms},
           {"beamBundleRms", d.beam_bundle_rms},
           {"mappingRms", d.mapping_rms}}}};
  if (file.stereo) j["stereo"] = rig_to_json(*file.stereo);
  return j.dump(2);
}

CalibrationFile calibration_from_json(const std::string& text) {
  return parse_guard("calibration", [&] {
    const json j = json::parse(text);
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "calibration must be a JSON object");
    const int version = j.at("schemaVersion").get<int>();
    if (version != kCalibrationSchemaVersion) {
      throw Error(ErrorCode::ParseError, "unsupported calibration schemaVersion " + std::to_string(version));
    }
    CalibrationFile out;
    auto& c = out.calibration;
    const auto R = fixed_array<9>(j, "R");
    const auto T = fixed_array<3>(j, "T");
    for (int r = 0; r < 3; ++r) {
      for (int k = 0; k < 3; ++k) c.pose.R(r, k) = R[static_cast<std::size_t>(3 * r + k)];
    }
    c.pose.T = Vec3(T[0], T[1], T[2]);
    try {
      c.pose.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::ParseError, std::string("calibration pose: ") + e.what());
    }
    c.mapping.m_a = fixed_array<9>(j, "mA");
    c.mapping.m_b = fixed_array<9>(j, "mB");
    if (j.contains("residuals")) {
      const auto& r = j.at("residuals");
      auto& d = c.diagnostics;
      d.rotation.surface_xz_rms = r.value("surfaceXzRms", 0.0);
      d.rotation.surface_yz_rms = r.value("surfaceYzRms", 0.0);
      d.rotation.axis_line_rms = r.value("axisLineRms", 0.0);
      d.rotation.max_axis_dot = r.value("maxAxisDot", 0.0);
      d.rotation.axis_samples = r.value("axisSamples", std::size_t{0});
      d.beam_groups = r.value("beamGroups", std::size_t{0});
      d.beam_line_rms = r.value("beamLineRms", 0.0);
      d.beam_bundle_rms = r.value("beamBundleRms", 0.0);
      d.mapping_rms = r.value("mappingRms", 0.0);
      c.mapping.fit_residual_rms = d.mapping_rms;
    }
    if (j.contains("stereo")) out.stereo = rig_from_json(j.at("stereo"));
    return out;
  });
}

void write_calibration(const CalibrationFile& file, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::ConfigError, "cannot write " + path.string());
  f << calibration_to_json(file) << '\n';
}

CalibrationFile read_calibration(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::ParseError, "cannot read calibration " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return calibration_from_json(ss.str());
}

void write_session(const CalibrationSession& session, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::ConfigError, "cannot write " + path.string());
  json head = rig_to_json(session.rig);
  head["type"] = "rig";
  head["schemaVersion"] = 1;
  f << head.dump() << '\n';
  for (std::size_t b = 0; b < session.boards.size(); ++b) {
    for (const auto& [axis, list] : {std::pair{"x", &session.boards[b].x_scan}, std::pair{"y", &session.boards[b].y_scan}}) {
      for (const auto& o : *list) {
        json j = observation_to_json(o);
        j["type"] = "axis";
        j["board"] = b;
        j["axis"] = axis;
        f << j.dump() << '\n';
      }
    }
  }
  for (const auto& o : session.spiral) {
    json j = observation_to_json(o);
    j["type"] = "spiral";
    f << j.dump() << '\n';
  }
}

CalibrationSession read_session(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::ParseError, "cannot read session " + path.string());
  CalibrationSession s;
  std::string line;
  std::size_t lineno = 0;
  bool have_rig = false;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    parse_guard("session line " + std::to_string(lineno), [&] {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "rig") {
        s.rig = rig_from_json(j);
        have_rig = true;
      } else if (type == "axis") {
        const auto b = j.at("board").get<std::size_t>();
        if (b > 1000) throw Error(ErrorCode::ParseError, "board index out of range");
        if (s.boards.size() <= b) s.boards.resize(b + 1);
        const std::string axis = j.at("axis").get<std::string>();
        if (axis == "x") s.boards[b].x_scan.push_back(observation_from_json(j));
        else if (axis == "y") s.boards[b].y_scan.push_back(observation_from_json(j));
        else throw Error(ErrorCode::ParseError, "axis must be x or y");
      } else if (type == "spiral") {
        s.spiral.push_back(observation_from_json(j));
      } else {
        throw Error(ErrorCode::ParseError, "unknown record type '" + type + "'");
      }
      return 0;
    });
  }
  if (!have_rig) throw Error(ErrorCode::ParseError, "session has no rig record");
  return s;
}

}  // namespace beamlink::calib
