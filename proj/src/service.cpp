#include "beamlink/service.hpp"

#include <chrono>
#include <csignal>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "json.hpp"

#include "beamlink/error.hpp"

namespace beamlink::service {

namespace {

using nlohmann::json;
namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
json xy(const geom::Vec2& v) { return json::array({v.x(), v.y()}); }
std::string sym(fsk::Symbol s) { return s ? std::string(1, s) : std::string(); }

}  // namespace

fsk::Symbol parse_command_message(const std::string& text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::ParseError, "command message must be a JSON object");
  const auto it = j.find("cmd");
  if (it == j.end() || !it->is_string() || it->get<std::string>().size() != 1) {
    throw Error(ErrorCode::ParseError, "command message needs \"cmd\" holding one symbol");
  }
  return it->get<std::string>()[0];
}

SimulationHost::SimulationHost(runtime::VirtualRig rig, runtime::Controller controller, runtime::LoopConfig loop,
                               std::string scenario)
    : rig_(std::move(rig)), controller_(std::move(controller)), loop_(loop), scenario_name_(std::move(scenario)) {
  rebuild();
}

void SimulationHost::rebuild() {
  scenario_ = runtime::named_scenario(scenario_name_);
  scenario_.interactive = true;
  scenario_.trace = {};
  scenario_.duration_s = 1e9;
  sim_ = std::make_unique<runtime::Simulation>(rig_, controller_, loop_, scenario_);
  running_ = false;
  error_.clear();
}

void SimulationHost::start() {
  std::lock_guard lock(mu_);
  if (error_.empty()) running_ = true;
}

void SimulationHost::stop() {
  std::lock_guard lock(mu_);
  running_ = false;
}

void SimulationHost::reset(const std::string& scenario) {
  std::lock_guard lock(mu_);
  if (!scenario.empty()) {
    (void)runtime::named_scenario(scenario);  // validate before switching
    scenario_name_ = scenario;
  }
  rebuild();
}

void SimulationHost::command(fsk::Symbol cmd) {
  std::lock_guard lock(mu_);
  sim_->enqueue(cmd);
}

void SimulationHost::advance(double seconds) {
  std::lock_guard lock(mu_);
  if (!running_) return;
  const double until = sim_->time() + seconds;
  try {
    while (sim_->time() < until - 0.5 * loop_.dt && !sim_->finished()) sim_->step();
  } catch (const Error& e) {
    running_ = false;
    error_ = e.what();
  }
}

bool SimulationHost::running() const {
  std::lock_guard lock(mu_);
  return running_;
}

std::string SimulationHost::snapshot_json() const {
  std::lock_guard lock(mu_);
  const auto s = sim_->snapshot();
  const auto& issued = sim_->issued().commands;
  json j{{"type", "snapshot"},
         {"schemaVersion", kSchemaVersion},
         {"t", s.t},
         {"robot", {{"x", s.robot.x}, {"y", s.robot.y}, {"heading", s.robot.heading}}},
         {"beam", {{"x", finite_or_null(s.beam.x())}, {"y", finite_or_null(s.beam.y())}}},
         {"irradiance", s.irradiance},
         {"rx", sym(s.rx)},
         {"snrDb", finite_or_null(s.snr_db)},
         {"tx", issued.empty() ? std::string() : sym(issued.back().cmd)},
         {"energyMj", s.energy_mj},
         {"mode", robot::to_string(sim_->robot_state().mode)},
         {"collision", sim_->collided()},
         {"running", running_}};
  return j.dump();
}

std::string SimulationHost::scenario_json() const {
  std::lock_guard lock(mu_);
  json obstacles = json::array();
  for (const auto& ob : scenario_.obstacles) obstacles.push_back({{"center", xy(ob.center)}, {"halfExtent", xy(ob.half_extent)}});
  json reference = json::array();
  if (scenario_.reference) {
    for (const auto& p : scenario_.reference->points) reference.push_back(xy(p));
  }
  json j{{"schemaVersion", kSchemaVersion},
         {"scenario", scenario_name_},
         {"running", running_},
         {"t", sim_->time()},
         {"testbed", {{"center", xy(rig_.scene.testbed_center)}, {"halfExtent", xy(rig_.scene.testbed_half_extent)}}},
         {"obstacles", obstacles},
         {"reference", reference},
         {"robotRadiusM", rig_.robot_radius_m},
         {"symbolDurationS", rig_.fsk.symbol_duration_s}};
  if (!error_.empty()) j["error"] = error_;
  return j.dump();
}

namespace {

class WsSession;

struct Hub {
  SimulationHost& host;
  std::string static_dir;
  std::vector<std::weak_ptr<WsSession>> clients;
};

constexpr std::size_t kMaxQueued = 64;

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, Hub& hub) : ws_(std::move(socket)), hub_(hub) {}

  void accept(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->hub_.clients.push_back(self);
      self->send(self->hub_.host.snapshot_json());
      self->read();
    });
  }

  void send(std::string msg) {
    if (out_.size() >= kMaxQueued) return;  // slow client: drop rather than buffer without bound
    out_.push_back(std::move(msg));
    if (out_.size() == 1) write();
  }

 private:
  void read() {
    ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      const std::string msg = beast::buffers_to_string(self->buf_.data());
      self->buf_.consume(self->buf_.size());
      self->on_message(msg);
      self->read();
    });
  }

  void on_message(const std::string& msg) {
    try {
      const fsk::Symbol cmd = parse_command_message(msg);
      hub_.host.command(cmd);
      send(json{{"type", "ack"}, {"schemaVersion", kSchemaVersion}, {"cmd", std::string(1, cmd)}}.dump());
    } catch (const Error& e) {
      send(json{{"type", "error"}, {"schemaVersion", kSchemaVersion}, {"code", std::string(to_string(e.code()))},
                {"message", e.what()}}
               .dump());
    }
  }

  void write() {
    ws_.text(true);
    ws_.async_write(asio::buffer(out_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->out_.clear();
        return;
      }
      self->out_.pop_front();
      if (!self->out_.empty()) self->write();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buf_;
  std::deque<std::string> out_;
  Hub& hub_;
};

std::string content_type(const std::string& path) {
  const auto dot = path.rfind('.');
  const std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  if (ext == "html") return "text/html; charset=utf-8";
  if (ext == "js" || ext == "mjs") return "text/javascript";
  if (ext == "css") return "text/css";
  if (ext == "json") return "application/json";
  if (ext == "svg") return "image/svg+xml";
  if (ext == "png") return "image/png";
  return "application/octet-stream";
}

http::response<http::string_body> make_response(const http::request<http::string_body>& req, http::status status,
                                                 std::string body, const std::string& type) {
  http::response<http::string_body> res{status, req.version()};
  res.set(http::field::content_type, type);
  res.keep_alive(req.keep_alive());
  res.body() = std::move(body);
  res.prepare_payload();
  return res;
}

http::response<http::string_body> error_response(const http::request<http::string_body>& req, http::status status,
                                                  const std::string& message) {
  return make_response(req, status, json{{"error", message}}.dump(), "application/json");
}

http::response<http::string_body> handle_scenario(Hub& hub, const http::request<http::string_body>& req) {
  if (req.method() == http::verb::get) return make_response(req, http::status::ok, hub.host.scenario_json(), "application/json");
  if (req.method() != http::verb::post) return error_response(req, http::status::method_not_allowed, "use GET or POST");
  const json body = json::parse(req.body(), nullptr, false);
  if (body.is_discarded() || !body.is_object() || !body.contains("action") || !body["action"].is_string()) {
    return error_response(req, http::status::bad_request, "body must be {\"action\": \"start\"|\"stop\"|\"reset\"}");
  }
  const std::string action = body["action"].get<std::string>();
  try {
    if (action == "start") {
      hub.host.start();
    } else if (action == "stop") {
      hub.host.stop();
    } else if (action == "reset") {
      const auto it = body.find("scenario");
      hub.host.reset(it != body.end() && it->is_string() ? it->get<std::string>() : std::string());
    } else {
      return error_response(req, http::status::bad_request, "unknown action '" + action + "'");
    }
  } catch (const Error& e) {
    return error_response(req, http::status::bad_request, e.what());
  }
  return make_response(req, http::status::ok, hub.host.scenario_json(), "application/json");
}

http::response<http::string_body> handle_static(Hub& hub, const http::request<http::string_body>& req,
                                                std::string path) {
  if (req.method() != http::verb::get && req.method() != http::verb::head) {
    return error_response(req, http::status::method_not_allowed, "static assets are read-only");
  }
  if (path.empty() || path[0] != '/' || path.find("..") != std::string::npos) {
    return error_response(req, http::status::bad_request, "bad path");
  }
  if (path.back() == '/') path += "index.html";
  std::ifstream f(hub.static_dir + path, std::ios::binary);
  if (!f) return error_response(req, http::status::not_found, "not found");
  std::ostringstream ss;
  ss << f.rdbuf();
  auto res = make_response(req, http::status::ok, ss.str(), content_type(path));
  if (req.method() == http::verb::head) {
    res.body().clear();
    res.content_length(ss.str().size());
  }
  return res;
}

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, Hub& hub) : stream_(std::move(socket)), hub_(hub) {}

  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buf_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (!ec) self->on_request();
    });
  }

 private:
  void on_request() {
    std::string target(req_.target());
    target = target.substr(0, target.find('?'));
    if (websocket::is_upgrade(req_)) {
      if (target == "/ws") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), hub_)->accept(std::move(req_));
      }
      return;
    }
    http::response<http::string_body> res;
    if (target == "/api/scenario") res = handle_scenario(hub_, req_);
    else if (target == "/ws") res = error_response(req_, http::status::upgrade_required, "WebSocket endpoint");
    else res = handle_static(hub_, req_, target);
    auto msg = std::make_shared<http::response<http::string_body>>(std::move(res));
    http::async_write(stream_, *msg, [self = shared_from_this(), msg](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (!msg->keep_alive()) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->read();
    });
  }

  beast::tcp_stream stream_;
  beast::flat_buffer buf_;
  http::request<http::string_body> req_;
  Hub& hub_;
};

}  // namespace

struct Server::Impl {
  Impl(SimulationHost& host, const config::ServiceConfig& cfg)
      : hub{host, cfg.static_dir, {}},
        period_s(1.0 / cfg.snapshot_rate_hz),
        paced(cfg.pace_wall_clock),
        acceptor(ioc),
        timer(ioc) {
    const tcp::endpoint ep(asio::ip::make_address(cfg.host), static_cast<unsigned short>(cfg.port));
    acceptor.open(ep.protocol());
    acceptor.set_option(asio::socket_base::reuse_address(true));
    acceptor.bind(ep);
    acceptor.listen();
  }

  void accept() {
    acceptor.async_accept(asio::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<HttpSession>(std::move(socket), hub)->read();
      accept();
    });
  }

  void tick() {
    const auto wait = paced ? std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                  std::chrono::duration<double>(period_s))
                            : std::chrono::steady_clock::duration::zero();
    timer.expires_after(wait);
    timer.async_wait([this](beast::error_code ec) {
      if (ec) return;
      hub.host.advance(period_s);
      const std::string snap = hub.host.snapshot_json();
      std::erase_if(hub.clients, [](const auto& w) { return w.expired(); });
      for (const auto& w : hub.clients) {
        if (auto c = w.lock()) c->send(snap);
      }
      tick();
    });
  }

  asio::io_context ioc{1};
  Hub hub;
  double period_s;
  bool paced;
  tcp::acceptor acceptor;
  asio::steady_timer timer;
};

Server::Server(SimulationHost& host, const config::ServiceConfig& cfg) : impl_(std::make_unique<Impl>(host, cfg)) {}

Server::~Server() = default;

unsigned short Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run(bool handle_signals) {
  asio::signal_set signals(impl_->ioc);
  if (handle_signals) {
    signals.add(SIGINT);
    signals.add(SIGTERM);
    signals.async_wait([this](beast::error_code ec, int) {
      if (!ec) stop();
    });
  }
  impl_->accept();
  impl_->tick();
  impl_->ioc.run();
}

void Server::stop() { impl_->ioc.stop(); }

}  // namespace beamlink::service
