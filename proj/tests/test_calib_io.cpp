#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include "doctest.h"
#include "json.hpp"

#include "beamlink/calib_io.hpp"
#include "beamlink/error.hpp"
#include "beamlink/rng.hpp"
#include "beamlink/session_sim.hpp"

using namespace beamlink;
using namespace beamlink::calib;
namespace fs = std::filesystem;

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

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("beamlink_test_" + std::to_string(::getpid()) + "_" + name);
}

CalibrationFile sample_file() {
  optosim::SteeringDevice device(optosim::default_device_config());
  SessionSimConfig cfg;
  cfg.pixel_noise_px = 0.5;
  const auto sim = simulate_session(optosim::default_stereo_rig(), device, cfg, 4);
  return {calibrate(sim.session), sim.session.rig};
}

}  // namespace

TEST_SUITE("calib_io") {
  TEST_CASE("calibration round-trips bit for bit") {
    const auto file = sample_file();
    const auto back = calibration_from_json(calibration_to_json(file));
    const auto& a = file.calibration;
    const auto& b = back.calibration;
    for (int i = 0; i < 9; ++i) {
      CHECK(same_bits(a.pose.R(i / 3, i % 3), b.pose.R(i / 3, i % 3)));
      CHECK(same_bits(a.mapping.m_a[i], b.mapping.m_a[i]));
      CHECK(same_bits(a.mapping.m_b[i], b.mapping.m_b[i]));
    }
    for (int i = 0; i < 3; ++i) CHECK(same_bits(a.pose.T[i], b.pose.T[i]));
    CHECK(same_bits(a.diagnostics.beam_bundle_rms, b.diagnostics.beam_bundle_rms));
    CHECK(a.diagnostics.beam_groups == b.diagnostics.beam_groups);
    REQUIRE(back.stereo);
    CHECK(back.stereo->left.pose.isApprox(file.stereo->left.pose, 0.0));
    CHECK(back.stereo->right.intrinsics.fx == file.stereo->right.intrinsics.fx);
    CHECK(calibration_to_json(back) == calibration_to_json(file));
  }

  TEST_CASE("random doubles survive the text form") {
    Rng rng(8);
    auto file = sample_file();
    for (int trial = 0; trial < 50; ++trial) {
      for (auto& m : file.calibration.mapping.m_a) m = rng.gaussian() * std::pow(10.0, rng.uniform(-12, 3));
      const auto back = calibration_from_json(calibration_to_json(file));
      for (int i = 0; i < 9; ++i) CHECK(same_bits(back.calibration.mapping.m_a[i], file.calibration.mapping.m_a[i]));
    }
  }

  TEST_CASE("stereo block is optional") {
    auto file = sample_file();
    file.stereo.reset();
    CHECK_FALSE(calibration_from_json(calibration_to_json(file)).stereo);
  }

  TEST_CASE("malformed calibration text is a parse error") {
    CHECK(code_of([] { calibration_from_json("{not json"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { calibration_from_json("{}"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { calibration_from_json("[1,2,3]"); }) == ErrorCode::ParseError);

    const auto good = calibration_to_json(sample_file());
    auto wrong_version = nlohmann::json::parse(good);
    wrong_version["schemaVersion"] = 9;
    CHECK(code_of([&] { calibration_from_json(wrong_version.dump()); }) == ErrorCode::ParseError);

    auto long_r = nlohmann::json::parse(good);
    long_r["R"].push_back(0.0);
    CHECK(code_of([&] { calibration_from_json(long_r.dump()); }) == ErrorCode::ParseError);

    auto reflected = nlohmann::json::parse(good);
    for (int i = 0; i < 3; ++i) reflected["R"][3 * i] = -reflected["R"][3 * i].get<double>();  // det -1
    CHECK(code_of([&] { calibration_from_json(reflected.dump()); }) == ErrorCode::ParseError);

    auto text_t = nlohmann::json::parse(good);
    text_t["T"][0] = "zero";
    CHECK(code_of([&] { calibration_from_json(text_t.dump()); }) == ErrorCode::ParseError);
  }

  TEST_CASE("missing calibration file is reported") {
    const auto path = temp_path("absent.json");
    CHECK_THROWS_AS(read_calibration(path), Error);
  }

  TEST_CASE("calibration file round-trip on disk") {
    const auto file = sample_file();
    const auto path = temp_path("cal.json");
    write_calibration(file, path);
    const auto back = read_calibration(path);
    CHECK(calibration_to_json(back) == calibration_to_json(file));
    fs::remove(path);
  }

  TEST_CASE("session recording round-trips") {
    optosim::SteeringDevice device(optosim::default_device_config());
    SessionSimConfig cfg;
    cfg.pixel_noise_px = 0.5;
    const auto session = simulate_session(optosim::default_stereo_rig(), device, cfg, 6).session;
    const auto path = temp_path("session.jsonl");
    write_session(session, path);
    const auto back = read_session(path);
    fs::remove(path);
    REQUIRE(back.boards.size() == session.boards.size());
    REQUIRE(back.spiral.size() == session.spiral.size());
    for (std::size_t k = 0; k < session.boards.size(); ++k) {
      REQUIRE(back.boards[k].x_scan.size() == session.boards[k].x_scan.size());
      REQUIRE(back.boards[k].y_scan.size() == session.boards[k].y_scan.size());
      for (std::size_t i = 0; i < session.boards[k].x_scan.size(); ++i) {
        CHECK(back.boards[k].x_scan[i].pixel_left == session.boards[k].x_scan[i].pixel_left);
        CHECK(back.boards[k].x_scan[i].drive.a == session.boards[k].x_scan[i].drive.a);
      }
    }
    CHECK(back.spiral.back().pixel_right == session.spiral.back().pixel_right);
    // Identical input gives an identical calibration.
    CHECK(calibration_to_json({calibrate(back), std::nullopt}) ==
          calibration_to_json({calibrate(session), std::nullopt}));
  }

  TEST_CASE("corrupt session lines are parse errors") {
    const auto path = temp_path("bad.jsonl");
    for (const char* text : {"", "garbage\n", "{\"type\":\"axis\",\"board\":0}\n"}) {
      std::ofstream(path) << text;
      CHECK(code_of([&] { read_session(path); }) == ErrorCode::ParseError);
    }
    fs::remove(path);
  }
}
