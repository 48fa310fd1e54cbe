#pragma once

// Central configuration: defaults, a JSON file and dotted-key overrides
// (precedence: override > file > default). Every key lives in one registry,
// which also generates the --help listing and the schema document.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "beamlink/calib.hpp"
#include "beamlink/runtime.hpp"
#include "beamlink/session_sim.hpp"

namespace beamlink::config {

inline constexpr std::uint64_t kDefaultSeed = 20240601;

struct BerSweepConfig {
  std::vector<double> snr_db{-10.0, -6.0, -3.0, -1.0, 0.0, 1.0, 1.5, 2.0, 2.5, 3.01, 4.0, 6.0, 10.0};
  std::uint64_t bits_per_point = 10000;
};

struct SimulateConfig {
  // pathFollow, obstacleForward, obstacleLeft or obstacleRight
  std::string scenario = "pathFollow";
  double duration_s = 0.0;  // 0 keeps the scenario default
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir = "console";
  double snapshot_rate_hz = 20.0;
  bool pace_wall_clock = true;
  std::string scenario = "pathFollow";
};

struct AppConfig {
  std::uint64_t seed = kDefaultSeed;
  double baseline_m = 0.2;
  std::vector<double> device_rotation_deg{1.5, -2.0, 3.0};  // about x, y, z, applied z*y*x
  std::vector<double> device_translation_m{0.03, -0.07, 0.02};
  std::string ambient_preset;  // empty keeps channel.noiseFloorMv
  runtime::VirtualRig rig;
  runtime::LoopConfig loop;
  calib::CalibTolerances calib;
  calib::SessionSimConfig session = [] {
    calib::SessionSimConfig s;
    s.pixel_noise_px = 0.5;
    return s;
  }();
  std::string session_path;  // recorded session; empty simulates one
  runtime::GridTestConfig grid;
  runtime::VelocitySweepConfig velocity;
  BerSweepConfig ber;
  SimulateConfig simulate;
  ServiceConfig service;

  /// Propagates derived fields (stereo rig, device pose, seed, ambient preset) and validates.
  /// Throws ConfigError.
  void finalize();
};

struct KeyInfo {
  std::string key;
  std::string type;
  std::string default_value;  // JSON text
  std::string help;
};

/// Every accepted key with its type and default, in registry order.
std::vector<KeyInfo> list_keys();

/// Sets one dotted key from its textual value. Values parse as JSON; a bare
/// word is accepted for string keys. Throws ConfigError.
void set_key(AppConfig& cfg, const std::string& key, const std::string& value);

/// Applies a JSON document of nested objects whose leaf paths are keys.
void apply_json_text(AppConfig& cfg, const std::string& text);

/// Defaults, then the file, then "key=value" overrides, then finalize().
AppConfig load(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides);

/// Effective configuration as nested JSON.
std::string to_json(const AppConfig& cfg);

/// Markdown table of every key (used to generate docs/config.md).
std::string schema_markdown();

}  // namespace beamlink::config
