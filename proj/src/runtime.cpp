#include "beamlink/runtime.hpp"

#include <algorithm>
#include <cmath>

#include "beamlink/error.hpp"
#include "beamlink/rng.hpp"

namespace beamlink::runtime {

namespace {

int whole_ticks(double period, double dt, const char* what) {
  const double n = period / dt;
  const double r = std::round(n);
  if (r < 1.0 || std::abs(n - r) > 1e-6 * r) {
    throw Error(ErrorCode::ConfigError, std::string(what) + " period is not a whole number of ticks");
  }
  return static_cast<int>(r);
}

optosim::SyntheticImage crop(const optosim::SyntheticImage& img, int cx, int cy, int size) {
  const int x0 = std::clamp(cx - size / 2, 0, std::max(0, img.width - size));
  const int y0 = std::clamp(cy - size / 2, 0, std::max(0, img.height - size));
  optosim::SyntheticImage out;
  out.width = std::min(size, img.width);
  out.height = std::min(size, img.height);
  out.x0 = img.x0 + x0;
  out.y0 = img.y0 + y0;
  out.pixels.resize(static_cast<std::size_t>(out.width) * static_cast<std::size_t>(out.height));
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) out.at(x, y) = img.at(x0 + x, y0 + y);
  }
  return out;
}

}  // namespace

LoopConfig LoopConfig::ideal() {
  LoopConfig c;
  c.camera_rate_hz = 1.0 / c.dt;
  c.processing_latency_s = 0.0;
  c.mirror_rate_hz = 1.0 / c.dt;
  c.instantaneous_mirror = true;
  return c;
}

void LoopConfig::validate() const {
  if (!(dt > 0.0) || !(camera_rate_hz > 0.0) || !(mirror_rate_hz > 0.0) || !(processing_latency_s >= 0.0)) {
    throw Error(ErrorCode::ConfigError, "loop rates and dt must be positive");
  }
  (void)camera_ticks();
  (void)mirror_ticks();
  (void)latency_ticks();
  if (roi_px < 0 || log_every_ticks < 1) throw Error(ErrorCode::ConfigError, "bad roi or log decimation");
}

int LoopConfig::camera_ticks() const { return whole_ticks(1.0 / camera_rate_hz, dt, "camera"); }
int LoopConfig::mirror_ticks() const { return whole_ticks(1.0 / mirror_rate_hz, dt, "mirror"); }
int LoopConfig::latency_ticks() const {
  return processing_latency_s == 0.0 ? 0 : whole_ticks(processing_latency_s, dt, "latency");
}

Simulation::Simulation(const VirtualRig& rig, const Controller& controller, const LoopConfig& loop, Scenario scenario)
    : rig_(rig),
      controller_(controller),
      loop_(loop),
      scenario_(std::move(scenario)),
      robot_mode_(true),
      device_(rig.device),
      channel_(rig.channel, 1.0 / loop.dt, derive_seed(loop.seed, 0xC4A)) {
  scenario_.validate(rig_.scene);
  rig_.scene.obstacles = scenario_.obstacles;
  robot_.pose = scenario_.start;
  robot_.energy_mj = scenario_.initial_energy_mj;
  init();
}

Simulation::Simulation(const VirtualRig& rig, const Controller& controller, const LoopConfig& loop,
                       TargetMotion motion)
    : rig_(rig),
      controller_(controller),
      loop_(loop),
      motion_(std::move(motion)),
      robot_mode_(false),
      device_(rig.device),
      channel_(rig.channel, 1.0 / loop.dt, derive_seed(loop.seed, 0xC4A)) {
  init();
}

void Simulation::init() {
  loop_.validate();
  rig_.robot.validate();
  if (loop_.instantaneous_mirror) {
    auto cfg = rig_.device;
    cfg.slew.instantaneous = true;
    device_ = optosim::SteeringDevice(cfg);
  }
  const auto& fsk = rig_.fsk;
  fsk.alphabet.check_nyquist(fsk.adc_rate);
  ticks_per_slot_ = whole_ticks(fsk.symbol_duration_s, loop_.dt, "symbol slot");
  ticks_per_adc_ = whole_ticks(1.0 / fsk.adc_rate, loop_.dt, "ADC sample");
  for (const auto& [sym, f] : fsk.alphabet.entries()) {
    const fsk::Symbol one[1] = {sym};
    slot_wave_.push_back(fsk::encode(one, fsk.alphabet, fsk.symbol_duration_s, fsk.modulation_depth, 1.0 / loop_.dt,
                                     fsk.rise_time_s)
                             .samples);
  }
  robot_ = robot::apply_command(robot_, 'F');
}

double Simulation::time() const { return static_cast<double>(tick_) * loop_.dt; }

bool Simulation::finished() const {
  return robot_mode_ && time() >= scenario_.duration_s - 0.5 * loop_.dt;
}

void Simulation::enqueue(fsk::Symbol cmd) {
  if (!rig_.fsk.alphabet.contains(cmd)) {
    throw Error(ErrorCode::UnknownSymbol, std::string("command '") + cmd + "' is not in the alphabet");
  }
  queue_.push_back(cmd);
}

TargetState Simulation::target() const {
  if (!robot_mode_) return motion_(time());
  const auto& p = robot_.pose;
  return {Vec3(p.x, p.y, rig_.scene.ground_z - rig_.scene.tag.height_m), Vec3(0.0, 0.0, -1.0)};
}

double Simulation::beam_error_m() const { return device_.beam().distance_to(target().cell); }

Snapshot Simulation::snapshot() const {
  return {row_.t, row_.robot, row_.beam, row_.irradiance, row_.energy_mj, last_rx_, row_.snr_db};
}

std::optional<Vec2> Simulation::detect(const geom::Camera& cam, const std::optional<Vec2>& predicted,
                                       std::uint64_t seed, int stream) {
  optosim::SimScene scene = rig_.scene;
  const TargetState ts = target();
  scene.tag_center = ts.cell;
  scene.tag_normal = ts.normal;
  const double brightness = optosim::tag_brightness(rig_.imaging, cam, ts.cell);
  const optosim::BrightAnnulus tag{ts.cell, ts.normal, scene.tag.inner_radius_m, scene.tag.outer_radius_m,
                                   brightness};
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(stream)));
  const double background = rig_.imaging.ambient_gain * scene.ambient_lux;
  const int roi = loop_.roi_px > 0 ? loop_.roi_px : 64;

  optosim::SyntheticImage img;
  if (predicted && loop_.roi_px > 0) {
    const optosim::Window win{static_cast<int>(std::lround(predicted->x())) - roi / 2,
                              static_cast<int>(std::lround(predicted->y())) - roi / 2, roi, roi};
    img = optosim::render_view(cam, std::span<const optosim::BrightAnnulus>(&tag, 1), background,
                               rig_.imaging.noise_sigma, rig_.imaging.supersample, rng, win);
  } else {
    // Acquisition: full-frame readout, then a window around the prediction or the brightest pixel.
    const auto full = optosim::render_view(cam, std::span<const optosim::BrightAnnulus>(&tag, 1), background,
                                           rig_.imaging.noise_sigma, rig_.imaging.supersample, rng);
    int bx = 0, by = 0;
    if (predicted) {
      bx = static_cast<int>(std::lround(predicted->x()));
      by = static_cast<int>(std::lround(predicted->y()));
    } else {
      const auto it = std::max_element(full.pixels.begin(), full.pixels.end());
      const auto idx = static_cast<int>(it - full.pixels.begin());
      bx = idx % full.width;
      by = idx / full.width;
    }
    img = crop(full, bx, by, roi);
  }
  if (img.pixels.empty()) return std::nullopt;
  const auto blob = tracker::detect_tag(img, rig_.tracker, predicted);
  if (!blob) return std::nullopt;
  return blob->centroid;
}

void Simulation::capture() {
  ++frame_;
  const std::uint64_t seed = derive_seed(loop_.seed, 0xF7A3E, frame_);
  const auto l = detect(rig_.cameras.left, last_left_, seed, 1);
  const auto r = l ? detect(rig_.cameras.right, last_right_, seed, 2) : std::nullopt;
  bool ok = false;
  if (l && r) {
    try {
      const Vec3 p = geom::triangulate(controller_.stereo, *l, *r);
      const auto drive = calib::steer_to_point(controller_.calibration, p);
      pending_.push_back({tick_ + static_cast<std::uint64_t>(loop_.latency_ticks()), drive});
      ok = true;
    } catch (const Error&) {
      ok = false;
    }
  }
  if (ok) {
    last_left_ = l;
    last_right_ = r;
    last_detection_tick_ = tick_;
    lost_reported_ = false;
    return;
  }
  last_left_.reset();
  last_right_.reset();
  const double lost_for = static_cast<double>(tick_ - last_detection_tick_) * loop_.dt;
  if (lost_for > loop_.lost_fatal_s) {
    throw Error(ErrorCode::TrackingLost, "no tag detection for " + std::to_string(lost_for) + " s");
  }
  if (lost_for > loop_.lost_timeout_s && !lost_reported_) {
    ++lost_events_;
    lost_reported_ = true;
  }
}

void Simulation::start_slot() {
  const double t = time();
  fsk::Symbol cmd = current_cmd_;
  if (pilot_) {
    cmd = pilot_(t, robot_);
  } else if (scenario_.interactive) {
    if (!queue_.empty()) {
      cmd = queue_.front();
      queue_.pop_front();
    }
  } else {
    cmd = scenario_.trace.at(t);
  }
  if (issued_.commands.empty() || issued_.commands.back().cmd != cmd) issued_.commands.push_back({t, cmd});
  current_cmd_ = cmd;
  tx_ = cmd;
  const auto& entries = rig_.fsk.alphabet.entries();
  tx_index_ = static_cast<std::size_t>(
      std::find_if(entries.begin(), entries.end(), [cmd](const auto& e) { return e.first == cmd; }) - entries.begin());
  if (tx_index_ >= entries.size()) throw Error(ErrorCode::UnknownSymbol, std::string("command '") + cmd + "'");
  adc_buf_.clear();
}

void Simulation::end_slot() {
  const auto& fsk = rig_.fsk;
  const fsk::Symbol rx = fsk::decode_slot(adc_buf_, fsk.adc_rate, fsk.alphabet, fsk.peak_threshold_mv(rig_.channel),
                                          fsk.refractory_fraction);
  ++symbols_sent_;
  if (rx != tx_) ++symbol_errors_;
  last_rx_ = rx;
  row_.rx = rx;
  robot_ = robot::apply_command(robot_, rx);
}

void Simulation::check_collision() {
  const Vec2 c(robot_.pose.x, robot_.pose.y);
  for (const auto& ob : rig_.scene.obstacles) {
    const Vec2 d = (c - ob.center).cwiseAbs() - ob.half_extent;
    const double dist = d.cwiseMax(0.0).norm();
    if (dist < rig_.robot_radius_m) collided_ = true;
  }
  if (!rig_.scene.in_testbed(c)) left_testbed_ = true;
}

void Simulation::step() {
  const auto in_slot = static_cast<int>(tick_ % static_cast<std::uint64_t>(ticks_per_slot_));
  row_.rx = 0;
  if (robot_mode_ && in_slot == 0) start_slot();
  if (tick_ % static_cast<std::uint64_t>(loop_.camera_ticks()) == 0) capture();
  if (tick_ % static_cast<std::uint64_t>(loop_.mirror_ticks()) == 0) {
    while (!pending_.empty() && pending_.front().ready_tick <= tick_) {
      latched_ = pending_.front().drive;
      pending_.pop_front();
    }
  }
  const geom::Ray3 ray = device_.steer_to(latched_.value_or(optosim::Drive{}), loop_.dt);

  const TargetState ts = target();
  const Vec3 n = ts.normal.normalized();
  const double beam_normal = optosim::irradiance_at(rig_.beam, ray, ts.cell, -ray.direction.vec());
  const double cos_inc = std::clamp(-ray.direction.dot(n), 0.0, 1.0);
  const double incidence = std::acos(cos_inc);
  const double m = robot_mode_ ? slot_wave_[tx_index_][static_cast<std::size_t>(in_slot)] : 1.0;

  if (robot_mode_) {
    const double v = channel_.push(m, beam_normal, incidence);
    if (in_slot % ticks_per_adc_ == 0) {
      adc_buf_.push_back(fsk::adc_quantize(v, rig_.fsk.adc_bits, rig_.fsk.adc_vref));
    }
    if (in_slot == ticks_per_slot_ - 1) end_slot();
    robot_ = robot::harvest_step(robot_, rig_.robot, beam_normal * m, incidence, loop_.dt);
    if (!collided_) {
      robot_ = robot::motion_step(robot_, rig_.robot, loop_.dt);
      check_collision();
    }
  }

  row_.t = time();
  row_.robot = robot_.pose;
  const auto plane = geom::Plane3::through(ts.cell, geom::UnitVec3::normalize(n));
  const auto s = plane.intersect(ray);
  const Vec3 hit = s && *s > 0.0 ? ray.at(*s) : Vec3::Constant(std::numeric_limits<double>::quiet_NaN());
  row_.beam = hit.head<2>();
  row_.irradiance = beam_normal * cos_inc * m;
  row_.energy_mj = robot_.energy_mj;
  row_.mode = robot_.mode;
  row_.tx = robot_mode_ ? tx_ : 0;
  row_.snr_db = fsk::snr_db(fsk::signal_vpp_mv(beam_normal, incidence, rig_.fsk.modulation_depth, rig_.channel),
                            rig_.channel.noise_floor_mv);
  ++tick_;
}

}  // namespace beamlink::runtime
