#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>

#include <unistd.h>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "doctest.h"
#include "json.hpp"

#include "beamlink/error.hpp"
#include "beamlink/service.hpp"
#include "beamlink/session_sim.hpp"

// After Eigen: <resolv.h> defines a _res macro that collides with Eigen parameter names.
#include "httplib.h"

using namespace beamlink;
using namespace beamlink::service;
using nlohmann::json;
namespace fs = std::filesystem;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

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

const runtime::Controller& controller() {
  static const runtime::Controller c = [] {
    const runtime::VirtualRig rig;
    optosim::SteeringDevice device(rig.device);
    const auto sim = calib::simulate_session(rig.cameras, device, calib::SessionSimConfig{}, 1);
    return runtime::Controller{rig.cameras, calib::calibrate(sim.session)};
  }();
  return c;
}

SimulationHost make_host() { return SimulationHost({}, controller(), {}, "pathFollow"); }

// Server on a free port with a temporary asset directory, run on its own thread.
struct RunningServer {
  fs::path assets;
  SimulationHost host = make_host();
  std::unique_ptr<Server> server;
  std::thread thread;

  RunningServer() {
    assets = fs::temp_directory_path() / ("beamlink_assets_" + std::to_string(::getpid()));
    fs::create_directories(assets / "js");
    std::ofstream(assets / "index.html") << "<!doctype html><title>console</title>";
    std::ofstream(assets / "js" / "app.js") << "console.log(1);";
    config::ServiceConfig cfg;
    cfg.port = 0;
    cfg.static_dir = assets.string();
    server = std::make_unique<Server>(host, cfg);
    thread = std::thread([this] { server->run(); });
  }
  ~RunningServer() {
    server->stop();
    thread.join();
    fs::remove_all(assets);
  }
  httplib::Client http() const {
    httplib::Client c("127.0.0.1", server->port());
    c.set_read_timeout(5, 0);
    return c;
  }
};

class WsClient {
 public:
  explicit WsClient(unsigned short port) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    boost::asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/ws");
  }
  json read() {
    beast::flat_buffer buf;
    ws_.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  }
  // Next message of the given type, skipping interleaved snapshots.
  json read_type(const std::string& type, int max_messages = 200) {
    for (int i = 0; i < max_messages; ++i) {
      auto m = read();
      if (m["type"] == type) return m;
    }
    FAIL("no message of type " << type);
    return {};
  }
  void send(const std::string& text) { ws_.write(boost::asio::buffer(text)); }
  void close() { ws_.close(websocket::close_code::normal); }

 private:
  boost::asio::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("command messages") {
    CHECK(parse_command_message(R"({"cmd":"L"})") == 'L');
    CHECK(parse_command_message(R"({"cmd":"F","extra":1})") == 'F');
    CHECK(code_of([] { parse_command_message("L"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { parse_command_message(R"({"cmd":"LR"})"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { parse_command_message(R"({"cmd":5})"); }) == ErrorCode::ParseError);
    CHECK(code_of([] { parse_command_message(R"({"command":"L"})"); }) == ErrorCode::ParseError);
  }

  TEST_CASE("host start, stop and reset") {
    auto host = make_host();
    CHECK_FALSE(host.running());
    host.advance(0.5);  // stopped hosts do not advance
    CHECK(json::parse(host.snapshot_json())["t"] == 0.0);
    host.start();
    host.advance(0.5);
    const auto snap = json::parse(host.snapshot_json());
    CHECK(snap["t"].get<double>() == doctest::Approx(0.5).epsilon(0.01));
    CHECK(snap["schemaVersion"] == kSchemaVersion);
    CHECK(snap["running"] == true);
    host.stop();
    CHECK_FALSE(host.running());
    host.reset("obstacleLeft");
    const auto scen = json::parse(host.scenario_json());
    CHECK(scen["scenario"] == "obstacleLeft");
    CHECK(scen["obstacles"].size() == 1);
    CHECK(json::parse(host.snapshot_json())["t"] == 0.0);
    CHECK(code_of([&] { host.reset("maze"); }) == ErrorCode::InvalidScenario);
  }

  TEST_CASE("host decodes a queued command") {
    auto host = make_host();
    host.start();
    host.advance(0.5);
    CHECK(code_of([&] { host.command('Z'); }) == ErrorCode::UnknownSymbol);
    host.command('R');
    host.advance(0.33);
    const auto snap = json::parse(host.snapshot_json());
    CHECK(snap["rx"] == "R");
    CHECK(snap["tx"] == "R");
  }

  TEST_CASE("static assets and routing") {
    RunningServer s;
    auto c = s.http();
    auto index = c.Get("/");
    REQUIRE(index);
    CHECK(index->status == 200);
    CHECK(index->body.find("console") != std::string::npos);
    CHECK(index->get_header_value("Content-Type").find("text/html") == 0);
    auto js = c.Get("/js/app.js");
    REQUIRE(js);
    CHECK(js->status == 200);
    CHECK(js->get_header_value("Content-Type").find("javascript") != std::string::npos);
    auto missing = c.Get("/nope.css");
    REQUIRE(missing);
    CHECK(missing->status == 404);
    auto escape = c.Get("/../../etc/passwd");
    REQUIRE(escape);
    CHECK((escape->status == 400 || escape->status == 404));
    auto ws_plain = c.Get("/ws");
    REQUIRE(ws_plain);
    CHECK(ws_plain->status == 426);
  }

  TEST_CASE("scenario endpoint") {
    RunningServer s;
    auto c = s.http();
    auto get = c.Get("/api/scenario");
    REQUIRE(get);
    CHECK(get->status == 200);
    auto body = json::parse(get->body);
    CHECK(body["schemaVersion"] == kSchemaVersion);
    CHECK(body["scenario"] == "pathFollow");
    CHECK(body["running"] == false);
    CHECK(body["reference"].size() >= 2);

    auto start = c.Post("/api/scenario", R"({"action":"start"})", "application/json");
    REQUIRE(start);
    CHECK(start->status == 200);
    CHECK(json::parse(start->body)["running"] == true);
    CHECK(s.host.running());

    auto reset = c.Post("/api/scenario", R"({"action":"reset","scenario":"obstacleRight"})", "application/json");
    REQUIRE(reset);
    CHECK(json::parse(reset->body)["scenario"] == "obstacleRight");
    CHECK(json::parse(reset->body)["running"] == false);

    auto bad_action = c.Post("/api/scenario", R"({"action":"fly"})", "application/json");
    REQUIRE(bad_action);
    CHECK(bad_action->status == 400);
    auto bad_scenario = c.Post("/api/scenario", R"({"action":"reset","scenario":"maze"})", "application/json");
    REQUIRE(bad_scenario);
    CHECK(bad_scenario->status == 400);
    auto garbage = c.Post("/api/scenario", "not json", "application/json");
    REQUIRE(garbage);
    CHECK(garbage->status == 400);
    auto put = c.Put("/api/scenario", "{}", "application/json");
    REQUIRE(put);
    CHECK(put->status == 405);
  }

  TEST_CASE("websocket snapshots and commands") {
    RunningServer s;
    WsClient ws(s.server->port());
    const auto first = ws.read();
    CHECK(first["type"] == "snapshot");
    CHECK(first["schemaVersion"] == kSchemaVersion);
    for (const char* field : {"t", "robot", "beam", "irradiance", "rx", "tx", "energyMj", "mode", "collision", "running"}) {
      CHECK_MESSAGE(first.contains(field), field);
    }

    ws.send("{\"cmd\":\"Q\"}");
    const auto err = ws.read_type("error");
    CHECK(err["code"] == "UnknownSymbol");
    ws.send("garbage");
    CHECK(ws.read_type("error")["code"] == "ParseError");

    s.host.start();
    ws.send(R"({"cmd":"L"})");
    const auto ack = ws.read_type("ack");
    CHECK(ack["cmd"] == "L");
    // At 20 Hz, two symbol slots of wall-clock time fit well inside 100 snapshots.
    bool decoded = false;
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
    while (!decoded && std::chrono::steady_clock::now() < deadline) {
      const auto m = ws.read();
      decoded = m["type"] == "snapshot" && m["rx"] == "L";
    }
    CHECK(decoded);
    ws.close();
  }

  TEST_CASE("several clients receive broadcasts") {
    RunningServer s;
    WsClient a(s.server->port()), b(s.server->port());
    CHECK(a.read()["type"] == "snapshot");
    CHECK(b.read()["type"] == "snapshot");
    s.host.start();
    const double ta = a.read_type("snapshot")["t"].get<double>();
    const double tb = b.read_type("snapshot")["t"].get<double>();
    CHECK(ta >= 0.0);
    CHECK(tb >= 0.0);
    a.close();
    // The remaining client keeps receiving after the other disconnects.
    CHECK(b.read_type("snapshot")["type"] == "snapshot");
    b.close();
  }
}
