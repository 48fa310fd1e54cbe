#pragma once

// Interactive service: a WebSocket at /ws broadcasting state snapshots and
// accepting steering commands, static console assets over HTTP, and
// /api/scenario for start, stop and reset. One port, one I/O thread.

#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "beamlink/config.hpp"
#include "beamlink/runtime.hpp"

namespace beamlink::service {

inline constexpr int kSchemaVersion = 1;

/// Parses {"cmd":"L"}. Throws ParseError for malformed messages.
fsk::Symbol parse_command_message(const std::string& text);

/// Owns the interactive simulation. Thread safe.
class SimulationHost {
 public:
  SimulationHost(runtime::VirtualRig rig, runtime::Controller controller, runtime::LoopConfig loop,
                 std::string scenario);

  void start();
  void stop();
  /// Rebuilds the simulation, optionally switching scenario, and leaves it stopped.
  void reset(const std::string& scenario = "");
  /// Queues a command for the next free symbol slot. Throws UnknownSymbol.
  void command(fsk::Symbol cmd);
  /// Advances simulated time by `seconds` while running. A fatal error stops the run.
  void advance(double seconds);

  bool running() const;
  std::string snapshot_json() const;
  /// Scenario layout (testbed, obstacles, reference path) plus run status.
  std::string scenario_json() const;

 private:
  void rebuild();

  runtime::VirtualRig rig_;
  runtime::Controller controller_;
  runtime::LoopConfig loop_;
  std::string scenario_name_;
  runtime::Scenario scenario_;
  std::unique_ptr<runtime::Simulation> sim_;
  bool running_ = false;
  std::string error_;
  mutable std::mutex mu_;
};

class Server {
 public:
  /// Binds immediately; port 0 picks a free port.
  Server(SimulationHost& host, const config::ServiceConfig& cfg);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  unsigned short port() const;
  /// Serves until stop() is called, or SIGINT/SIGTERM when handle_signals is set.
  void run(bool handle_signals = false);
  /// Safe from any thread.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace beamlink::service
