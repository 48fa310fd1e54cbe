#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "beamlink/error.hpp"
#include "beamlink/rng.hpp"
#include "beamlink/runtime.hpp"

namespace beamlink::runtime {

namespace {

double wrap_angle(double a) {
  while (a > std::numbers::pi) a -= 2.0 * std::numbers::pi;
  while (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double sample_stddev(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

fsk::Symbol CommandTrace::at(double t) const {
  fsk::Symbol cmd = 'F';
  for (const auto& c : commands) {
    if (c.t <= t + 1e-9) cmd = c.cmd;
    else break;
  }
  return cmd;
}

double Polyline::length() const {
  double L = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) L += (points[i] - points[i - 1]).norm();
  return L;
}

std::pair<double, double> Polyline::project(const Vec2& p) const {
  if (points.size() < 2) throw Error(ErrorCode::DegenerateInput, "polyline needs two points");
  double best_d2 = std::numeric_limits<double>::infinity(), best_s = 0.0, best_lat = 0.0, s0 = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const Vec2 a = points[i - 1], seg = points[i] - a;
    const double len = seg.norm();
    if (len == 0.0) continue;
    const double u = std::clamp((p - a).dot(seg) / (len * len), 0.0, 1.0);
    const Vec2 q = a + u * seg;
    const double d2 = (p - q).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best_s = s0 + u * len;
      best_lat = cross2(seg / len, p - q) >= 0.0 ? std::sqrt(d2) : -std::sqrt(d2);
    }
    s0 += len;
  }
  return {best_s, best_lat};
}

Vec2 Polyline::point_at(double s) const {
  double s0 = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double len = (points[i] - points[i - 1]).norm();
    if (s <= s0 + len && len > 0.0) return points[i - 1] + (std::max(0.0, s - s0) / len) * (points[i] - points[i - 1]);
    s0 += len;
  }
  return points.back();
}

Vec2 Polyline::tangent_at(double s) const {
  double s0 = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double len = (points[i] - points[i - 1]).norm();
    if (s <= s0 + len && len > 0.0) return (points[i] - points[i - 1]) / len;
    s0 += len;
  }
  return (points.back() - points[points.size() - 2]).normalized();
}

Polyline Polyline::shifted(double offset) const {
  Polyline out;
  const std::size_t n = points.size();
  auto normal = [&](std::size_t i) {  // left normal of segment i -> i + 1
    const Vec2 t = (points[i + 1] - points[i]).normalized();
    return Vec2(-t.y(), t.x());
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (n < 2) {
      out.points.push_back(points[i]);
    } else if (i == 0 || i == n - 1) {
      out.points.push_back(points[i] + offset * normal(i == 0 ? 0 : n - 2));
    } else {
      // Miter join keeps both adjacent segments exactly `offset` away.
      const Vec2 a = normal(i - 1), b = normal(i);
      out.points.push_back(points[i] + offset * (a + b) / (1.0 + a.dot(b)));
    }
  }
  return out;
}

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::GridTest: return "gridTest";
    case ScenarioKind::VelocitySweep: return "velocitySweep";
    case ScenarioKind::PathFollow: return "pathFollow";
    case ScenarioKind::ObstacleAvoid: return "obstacleAvoid";
    case ScenarioKind::Custom: return "custom";
  }
  return "custom";
}

ScenarioKind scenario_kind_from_string(const std::string& s) {
  for (auto k : {ScenarioKind::GridTest, ScenarioKind::VelocitySweep, ScenarioKind::PathFollow,
                 ScenarioKind::ObstacleAvoid, ScenarioKind::Custom}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::InvalidScenario, "unknown scenario kind '" + s + "'");
}

void Scenario::validate(const optosim::SimScene& scene) const {
  if (!(duration_s > 0.0)) throw Error(ErrorCode::InvalidScenario, "duration must be positive");
  if (!scene.in_testbed(Vec2(start.x, start.y))) throw Error(ErrorCode::InvalidScenario, "start pose outside the testbed");
  for (const auto& ob : obstacles) {
    if (!(ob.half_extent.x() > 0.0 && ob.half_extent.y() > 0.0)) {
      throw Error(ErrorCode::InvalidScenario, "obstacle extents must be positive");
    }
  }
  for (std::size_t i = 1; i < trace.commands.size(); ++i) {
    if (trace.commands[i].t < trace.commands[i - 1].t) throw Error(ErrorCode::InvalidScenario, "trace is not time-ordered");
  }
  if (kind == ScenarioKind::PathFollow && (!reference || reference->points.size() < 2)) {
    throw Error(ErrorCode::InvalidScenario, "path following needs a reference path");
  }
  if (kind == ScenarioKind::ObstacleAvoid && obstacles.empty()) {
    throw Error(ErrorCode::InvalidScenario, "obstacle scenario needs an obstacle");
  }
  if (!(offset_scale_m > 0.0)) throw Error(ErrorCode::InvalidScenario, "offset scale must be positive");
}

Scenario path_follow_scenario() {
  Scenario s;
  s.kind = ScenarioKind::PathFollow;
  s.name = "path_follow";
  s.duration_s = 60.0;
  Polyline tape;
  for (int i = 0; i <= 80; ++i) {
    const double x = -0.40 + 0.01 * i;
    tape.points.emplace_back(x, 0.05 * std::exp(-(x / 0.12) * (x / 0.12)));
  }
  s.reference = tape;
  s.offset_scale_m = 0.1;
  const double offset = 0.057;
  s.pilot_route = tape.shifted(offset);
  const Vec2 p0 = s.pilot_route->point_at(0.05);
  s.start = {p0.x(), p0.y(), 0.0};
  return s;
}

Scenario obstacle_scenario(const std::string& variant) {
  Scenario s;
  s.kind = ScenarioKind::ObstacleAvoid;
  s.name = "obstacle_" + variant;
  s.duration_s = 60.0;
  s.start = {-0.30, 0.0, 0.0};
  s.obstacles.push_back({Vec2(0.0, 0.0), Vec2(0.03, 0.03)});
  if (variant == "forward") {
    s.trace.commands.push_back({0.0, 'F'});
    return s;
  }
  double side = 0.0;
  if (variant == "left") side = 1.0;
  else if (variant == "right") side = -1.0;
  else throw Error(ErrorCode::InvalidScenario, "obstacle variant must be forward, left or right");
  Polyline route;
  for (const auto& [x, y] : std::vector<std::pair<double, double>>{
           {-0.30, 0.0}, {-0.14, 0.0}, {-0.06, 0.09}, {0.08, 0.09}, {0.16, 0.0}, {0.40, 0.0}}) {
    route.points.emplace_back(x, side * y);
  }
  s.pilot_route = route;
  return s;
}

Scenario named_scenario(const std::string& name) {
  if (name == "pathFollow") return path_follow_scenario();
  if (name == "obstacleForward") return obstacle_scenario("forward");
  if (name == "obstacleLeft") return obstacle_scenario("left");
  if (name == "obstacleRight") return obstacle_scenario("right");
  throw Error(ErrorCode::InvalidScenario, "unknown scenario '" + name + "'");
}

Pilot route_pilot(Polyline route, PilotConfig cfg) {
  const double L = route.length();
  return [route = std::move(route), cfg, L](double, const robot::RobotState& st) -> fsk::Symbol {
    const Vec2 p(st.pose.x, st.pose.y);
    const double s = route.project(p).first;
    if (s >= L - 1e-3) return 'F';
    const Vec2 goal = route.point_at(std::min(L, s + cfg.lookahead_m));
    const Vec2 d = goal - p;
    const double err = wrap_angle(std::atan2(d.y(), d.x()) - st.pose.heading);
    if (err > cfg.deadband_rad) return 'L';
    if (err < -cfg.deadband_rad) return 'R';
    return 'F';
  };
}

ScenarioResult run_scenario(const VirtualRig& rig, const Controller& controller, const LoopConfig& loop,
                            const Scenario& scenario) {
  Simulation sim(rig, controller, loop, scenario);
  if (scenario.trace.commands.empty() && scenario.pilot_route && !scenario.interactive) {
    sim.set_pilot(route_pilot(*scenario.pilot_route));
  }
  ScenarioResult out;
  std::vector<double> offsets, irradiance;
  double distance = 0.0;
  robot::Pose2 prev = scenario.start;
  if (scenario.reference) {
    out.summary.initial_offset = std::abs(scenario.reference->project(Vec2(prev.x, prev.y)).second) /
                                 scenario.offset_scale_m;
  }
  while (!sim.finished()) {
    sim.step();
    const RunRow& row = sim.last_row();
    if ((sim.tick() - 1) % static_cast<std::uint64_t>(loop.log_every_ticks) == 0) {
      out.log.rows.push_back(row);
    }
    distance += std::hypot(row.robot.x - prev.x, row.robot.y - prev.y);
    prev = row.robot;
    irradiance.push_back(row.irradiance);
    if (scenario.reference) {
      offsets.push_back(std::abs(scenario.reference->project(Vec2(row.robot.x, row.robot.y)).second) /
                        scenario.offset_scale_m);
    }
  }
  auto& sm = out.summary;
  sm.scenario = scenario.name;
  sm.seed = loop.seed;
  sm.duration_s = sim.time();
  sm.collision = sim.collided();
  sm.left_testbed = sim.left_testbed();
  sm.final_pose = sim.robot_state().pose;
  sm.distance_m = distance;
  sm.mean_speed_cm_s = sm.duration_s > 0.0 ? 100.0 * distance / sm.duration_s : 0.0;
  sm.median_irradiance = median(irradiance);
  sm.symbols_sent = sim.symbols_sent();
  sm.symbol_errors = sim.symbol_errors();
  sm.tracking_lost_events = sim.tracking_lost_events();
  if (!offsets.empty()) {
    sm.median_offset = median(offsets);
    sm.mean_offset = std::accumulate(offsets.begin(), offsets.end(), 0.0) / static_cast<double>(offsets.size());
  }
  out.trace = sim.issued();
  return out;
}

std::vector<Vec3> grid_points(const geom::SteeringPose& device, double depth, double spacing) {
  std::vector<Vec3> out;
  for (int j = -1; j <= 1; ++j) {
    for (int i = -1; i <= 1; ++i) {
      if (i == 0 && j == 0) continue;
      out.emplace_back(device.T.x() + i * spacing, device.T.y() + j * spacing, depth);
    }
  }
  return out;
}

void check_reachable(const VirtualRig& rig, const Controller& controller, const Vec3& point) {
  const optosim::SteeringDevice device(rig.device);
  try {
    const auto ang = calib::target_angles(controller.calibration.pose, point);
    if (std::abs(ang.alpha) > device.optical_limit() || std::abs(ang.beta) > device.optical_limit()) {
      throw Error(ErrorCode::UnreachablePoint, "point lies outside the optical steering range");
    }
    (void)calib::steer_to_point(controller.calibration, point);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::UnreachablePoint) throw;
    throw Error(ErrorCode::UnreachablePoint, e.what());
  }
}

GridTestResult grid_test(const VirtualRig& rig, const Controller& controller, const LoopConfig& loop,
                         const GridTestConfig& cfg) {
  if (cfg.trials < 1 || !(cfg.measure_s > 0.0) || !(cfg.settle_s >= 0.0)) {
    throw Error(ErrorCode::InvalidScenario, "grid test needs trials >= 1 and a positive window");
  }
  GridTestResult out;
  const Vec3 origin = controller.calibration.pose.T;
  std::uint64_t index = 0;
  for (double depth : cfg.depths) {
    std::vector<double> depth_means;
    for (const Vec3& p : grid_points(controller.calibration.pose, depth, cfg.spacing_m)) {
      check_reachable(rig, controller, p);
      GridPoint gp{depth, p, {}, 0.0};
      const TargetState ts{p, (origin - p).normalized()};
      for (int trial = 0; trial < cfg.trials; ++trial) {
        LoopConfig lc = loop;
        lc.seed = derive_seed(loop.seed, 0x6121D, index * 16 + static_cast<std::uint64_t>(trial));
        Simulation sim(rig, controller, lc, [ts](double) { return ts; });
        const auto settle = static_cast<std::uint64_t>(std::llround(cfg.settle_s / lc.dt));
        const auto measure = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(cfg.measure_s / lc.dt)));
        double sum = 0.0;
        for (std::uint64_t k = 0; k < settle + measure; ++k) {
          sim.step();
          if (k >= settle) sum += sim.last_row().irradiance;
        }
        gp.trials.push_back(sum / static_cast<double>(measure));
      }
      gp.mean = std::accumulate(gp.trials.begin(), gp.trials.end(), 0.0) / static_cast<double>(gp.trials.size());
      depth_means.push_back(gp.mean);
      out.points.push_back(std::move(gp));
      ++index;
    }
    out.depth_stddev.push_back(sample_stddev(depth_means));
  }
  std::vector<double> means;
  for (const auto& gp : out.points) means.push_back(gp.mean);
  out.mean = means.empty() ? 0.0 : std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
  out.stddev = sample_stddev(means);
  return out;
}

double VelocitySweepResult::drop_fraction() const {
  if (speeds.size() < 2 || !(speeds.front().median > 0.0)) return 0.0;
  return 1.0 - speeds.back().median / speeds.front().median;
}

VelocitySweepResult velocity_sweep(const VirtualRig& rig, const Controller& controller, const LoopConfig& loop,
                                   const VelocitySweepConfig& cfg) {
  if (!(cfg.arm_length_m > 0.0) || !(cfg.rotations > 0.0)) {
    throw Error(ErrorCode::InvalidScenario, "arm length and rotations must be positive");
  }
  VirtualRig r = rig;
  r.beam.profile = cfg.profile;
  const Vec3 origin = controller.calibration.pose.T;
  const Vec3 center(origin.x(), origin.y(), cfg.depth_m);
  const Vec3 n = (origin - center).normalized();
  const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 e1 = (helper - helper.dot(n) * n).normalized();
  const Vec3 e2 = n.cross(e1);

  VelocitySweepResult out;
  for (double v_cm : cfg.speeds_cm_s) {
    if (!(v_cm > 0.0)) throw Error(ErrorCode::InvalidScenario, "speeds must be positive");
    const double omega = (v_cm / 100.0) / cfg.arm_length_m;
    const double arm = cfg.arm_length_m;
    Simulation sim(r, controller, loop, [=](double t) {
      return TargetState{center + arm * (std::cos(omega * t) * e1 + std::sin(omega * t) * e2), n};
    });
    const double total = cfg.warmup_s + cfg.rotations * 2.0 * std::numbers::pi / omega;
    const auto ticks = static_cast<std::uint64_t>(std::llround(total / loop.dt));
    const auto warm = static_cast<std::uint64_t>(std::llround(cfg.warmup_s / loop.dt));
    std::vector<double> samples;
    samples.reserve(ticks - warm);
    for (std::uint64_t k = 0; k < ticks; ++k) {
      sim.step();
      if (k >= warm) samples.push_back(sim.last_row().irradiance);
    }
    SpeedResult sr;
    sr.speed_cm_s = v_cm;
    sr.samples = samples.size();
    sr.median = median(samples);
    sr.p10 = percentile(samples, 0.1);
    sr.p90 = percentile(std::move(samples), 0.9);
    out.speeds.push_back(sr);
  }
  return out;
}

}  // namespace beamlink::runtime
