#include "beamlink/fsk.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <boost/math/special_functions/erf.hpp>

#include "beamlink/error.hpp"

namespace beamlink::fsk {

namespace {
constexpr double kMinAdcRate = 6.6;
constexpr double kRefAdcRate = 100.0;
constexpr double kRefDecodeCurrentMa = 0.3;
}  // namespace

SymbolAlphabet::SymbolAlphabet(std::vector<std::pair<Symbol, double>> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw Error(ErrorCode::PreconditionViolated, "empty symbol alphabet");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!(entries_[i].second >= 0.0) || !std::isfinite(entries_[i].second)) {
      throw Error(ErrorCode::PreconditionViolated, "symbol frequency must be finite and >= 0");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (entries_[j].first == entries_[i].first || entries_[j].second == entries_[i].second) {
        throw Error(ErrorCode::PreconditionViolated, "duplicate symbol or frequency");
      }
    }
  }
}

SymbolAlphabet SymbolAlphabet::steering() { return SymbolAlphabet({{'L', 12.5}, {'R', 25.0}, {'F', 0.0}}); }
SymbolAlphabet SymbolAlphabet::binary() { return SymbolAlphabet({{'L', 12.5}, {'R', 25.0}}); }

double SymbolAlphabet::frequency(Symbol s) const {
  for (const auto& [sym, f] : entries_) {
    if (sym == s) return f;
  }
  throw Error(ErrorCode::UnknownSymbol, std::string("symbol '") + s + "' is not in the alphabet");
}

bool SymbolAlphabet::contains(Symbol s) const {
  return std::any_of(entries_.begin(), entries_.end(), [s](const auto& e) { return e.first == s; });
}

double SymbolAlphabet::max_frequency() const {
  double m = 0.0;
  for (const auto& e : entries_) m = std::max(m, e.second);
  return m;
}

double SymbolAlphabet::shortest_period() const {
  const double f = max_frequency();
  return f > 0.0 ? 1.0 / f : std::numeric_limits<double>::infinity();
}

std::optional<Symbol> SymbolAlphabet::zero_symbol() const {
  for (const auto& [sym, f] : entries_) {
    if (f == 0.0) return sym;
  }
  return std::nullopt;
}

void SymbolAlphabet::check_nyquist(double adc_rate_hz) const {
  if (max_frequency() > adc_rate_hz / 2.0) {
    throw Error(ErrorCode::NyquistViolation, "ADC rate " + std::to_string(adc_rate_hz) +
                                                 " Hz cannot sample " + std::to_string(max_frequency()) + " Hz");
  }
}

double ChannelConfig::cutoff_hz() const { return 1.0 / (2.0 * std::numbers::pi * time_constant_s()); }

double ChannelConfig::angular_gain(double incidence_rad) const {
  const double r = std::abs(incidence_rad) / (angular_3db_deg * std::numbers::pi / 180.0);
  return 1.0 / (1.0 + std::pow(r, angular_order));
}

void ChannelConfig::apply_ambient_preset(const std::string& name) {
  const auto it = ambient_noise_floor_mv.find(name);
  if (it == ambient_noise_floor_mv.end()) throw Error(ErrorCode::ConfigError, "unknown ambient preset '" + name + "'");
  noise_floor_mv = it->second;
}

Waveform encode(std::span<const Symbol> symbols, const SymbolAlphabet& alphabet, double symbol_duration_s,
                double modulation_depth, double sample_rate, double rise_time_s) {
  if (!(symbol_duration_s > 0.0)) throw Error(ErrorCode::BadDuration, "symbol duration must be positive");
  if (!(sample_rate > 0.0)) throw Error(ErrorCode::PreconditionViolated, "sample rate must be positive");
  if (!(modulation_depth >= 0.0 && modulation_depth <= 1.0)) {
    throw Error(ErrorCode::PreconditionViolated, "modulation depth must lie in [0, 1]");
  }
  const double spp = symbol_duration_s * sample_rate;
  const auto per_slot = static_cast<std::size_t>(std::llround(spp));
  if (per_slot == 0 || std::abs(spp - static_cast<double>(per_slot)) > 1e-9 * spp) {
    throw Error(ErrorCode::BadDuration, "symbol duration must be a whole number of samples");
  }

  for (const auto& [sym, f] : alphabet.entries()) {
    const double cycles = symbol_duration_s * f;
    if (f > 0.0 && std::abs(cycles - std::round(cycles)) > 1e-9 * std::max(1.0, cycles)) {
      throw Error(ErrorCode::BadDuration, "symbol duration is not a whole number of periods");
    }
  }

  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.reserve(per_slot * symbols.size());
  const double low = 1.0 - modulation_depth;
  for (Symbol s : symbols) {
    const double f = alphabet.frequency(s);
    for (std::size_t n = 0; n < per_slot; ++n) {
      if (f == 0.0) {
        w.samples.push_back(1.0);
        continue;
      }
      // Integer sample index keeps edges exact for frequencies that divide the rate.
      const bool high = std::fmod(static_cast<double>(n) * f, sample_rate) < 0.5 * sample_rate;
      w.samples.push_back(high ? 1.0 : low);
    }
  }
  if (rise_time_s > 0.0 && !w.samples.empty()) {
    const double step = modulation_depth / (rise_time_s * sample_rate);
    double level = w.samples.front();
    for (double& v : w.samples) {
      level += std::clamp(v - level, -step, step);
      v = level;
    }
  }
  return w;
}

ReceiverChannel::ReceiverChannel(const ChannelConfig& cfg, double sample_rate, std::uint64_t seed)
    : cfg_(cfg), rng_(seed) {
  if (!(sample_rate > 0.0) || !(cfg.time_constant_s() > 0.0)) {
    throw Error(ErrorCode::PreconditionViolated, "sample rate and RC must be positive");
  }
  // Bilinear transform of H(s) = sRC / (1 + sRC).
  const double K = 2.0 * cfg.time_constant_s() * sample_rate;
  b_ = K / (1.0 + K);
  a_ = (K - 1.0) / (K + 1.0);
  primed_ = cfg.start_at_rest;
}

double ReceiverChannel::filter(double input) {
  if (!primed_) {
    prev_in_ = input;
    primed_ = true;
  }
  const double out = b_ * (input - prev_in_) + a_ * prev_out_;
  prev_in_ = input;
  prev_out_ = out;
  return out;
}

double ReceiverChannel::push_clean(double tx, double irradiance, double incidence_rad) {
  const double v = 1e-3 * cfg_.responsivity_mv_per_mw_cm2 * irradiance * cfg_.angular_gain(incidence_rad) * tx;
  return filter(v);
}

double ReceiverChannel::push(double tx, double irradiance, double incidence_rad) {
  return push_clean(tx, irradiance, incidence_rad) + 1e-3 * cfg_.noise_rms_mv() * rng_.gaussian();
}

Waveform channelize(const Waveform& tx, double irradiance, double incidence_rad, const ChannelConfig& cfg,
                    std::uint64_t seed) {
  ReceiverChannel ch(cfg, tx.sample_rate, seed);
  Waveform out;
  out.sample_rate = tx.sample_rate;
  out.start_time = tx.start_time;
  out.samples.reserve(tx.samples.size());
  for (double v : tx.samples) out.samples.push_back(ch.push(v, irradiance, incidence_rad));
  return out;
}

double adc_quantize(double volts, int resolution_bits, double vref) {
  const double lsb = vref / std::ldexp(1.0, resolution_bits);
  const double max_code = std::ldexp(1.0, resolution_bits - 1) - 1.0;
  const double min_code = -std::ldexp(1.0, resolution_bits - 1);
  return std::clamp(std::round(volts / lsb), min_code, max_code) * lsb;
}

Waveform adc_sample(const Waveform& w, double adc_rate, int resolution_bits, double vref,
                    const SymbolAlphabet* alphabet) {
  if (!(adc_rate > 0.0) || adc_rate > w.sample_rate) {
    throw Error(ErrorCode::PreconditionViolated, "ADC rate must be positive and not exceed the source rate");
  }
  if (resolution_bits < 2 || resolution_bits > 24 || !(vref > 0.0)) {
    throw Error(ErrorCode::PreconditionViolated, "bad ADC resolution or reference");
  }
  if (alphabet) alphabet->check_nyquist(adc_rate);

  Waveform out;
  out.sample_rate = adc_rate;
  out.start_time = w.start_time;
  const double ratio = w.sample_rate / adc_rate;
  for (std::size_t k = 0;; ++k) {
    const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(k) * ratio));
    if (n >= w.samples.size()) break;
    out.samples.push_back(adc_quantize(w.samples[n], resolution_bits, vref));
  }
  return out;
}

Symbol decode_slot(std::span<const double> samples, double sample_rate, const SymbolAlphabet& alphabet,
                   double peak_threshold_mv, double refractory_fraction) {
  const auto zero = alphabet.zero_symbol();
  Symbol fallback = alphabet.entries().front().first;
  double lowest = std::numeric_limits<double>::infinity();
  for (const auto& [sym, f] : alphabet.entries()) {
    if (f > 0.0 && f < lowest) {
      lowest = f;
      fallback = sym;
    }
  }
  const Symbol no_tone = zero ? *zero : fallback;
  if (samples.size() < 2) return no_tone;

  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(samples.size());
  const double thr = 1e-3 * peak_threshold_mv;

  // Schmitt trigger; each completed high run contributes one peak at its centroid.
  std::vector<double> peaks;
  bool high = false;
  double run_sum = 0.0, run_n = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double x = samples[i] - mean;
    if (!high) {
      if (x > thr) {
        high = true;
        run_sum = static_cast<double>(i);
        run_n = 1.0;
      }
    } else if (x < -thr) {
      peaks.push_back(run_sum / run_n / sample_rate);
      high = false;
    } else if (x > thr) {
      run_sum += static_cast<double>(i);
      run_n += 1.0;
    }
  }

  const double refractory = refractory_fraction * alphabet.shortest_period();
  std::vector<double> kept;
  for (double t : peaks) {
    if (kept.empty() || t - kept.back() >= refractory) kept.push_back(t);
  }
  if (kept.size() < 2) return no_tone;

  std::vector<double> intervals;
  for (std::size_t i = 1; i < kept.size(); ++i) intervals.push_back(kept[i] - kept[i - 1]);
  std::sort(intervals.begin(), intervals.end());
  const std::size_t m = intervals.size();
  const double median = m % 2 ? intervals[m / 2] : 0.5 * (intervals[m / 2 - 1] + intervals[m / 2]);

  Symbol best = fallback;
  double best_err = std::numeric_limits<double>::infinity();
  for (const auto& [sym, f] : alphabet.entries()) {
    if (f <= 0.0) continue;
    const double err = std::abs(median - 1.0 / f);
    if (err < best_err) {
      best_err = err;
      best = sym;
    }
  }
  return best;
}

std::vector<Symbol> decode_peak_timing(const Waveform& adc, const SymbolAlphabet& alphabet, double symbol_duration_s,
                                       double peak_threshold_mv, double refractory_fraction) {
  if (!(symbol_duration_s > 0.0)) throw Error(ErrorCode::BadDuration, "symbol duration must be positive");
  const auto per_slot = static_cast<std::size_t>(std::llround(symbol_duration_s * adc.sample_rate));
  if (per_slot == 0) throw Error(ErrorCode::BadDuration, "symbol shorter than one ADC sample");
  std::vector<Symbol> out;
  const std::span<const double> all(adc.samples);
  for (std::size_t start = 0; start + per_slot <= all.size(); start += per_slot) {
    out.push_back(decode_slot(all.subspan(start, per_slot), adc.sample_rate, alphabet, peak_threshold_mv,
                              refractory_fraction));
  }
  return out;
}

double FskConfig::peak_threshold_mv(const ChannelConfig& ch) const { return peak_threshold_ratio * ch.noise_floor_mv; }

double snr_db(double vpp_mv, double noise_floor_mv) {
  if (!(noise_floor_mv > 0.0)) throw Error(ErrorCode::PreconditionViolated, "noise floor must be positive");
  if (!(vpp_mv > 0.0)) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(vpp_mv / noise_floor_mv);
}

double SnrMeasurement::snr_db() const { return fsk::snr_db(vpp_mv, noise_floor_mv); }

double signal_vpp_mv(double irradiance, double incidence_rad, double modulation_depth, const ChannelConfig& cfg) {
  return cfg.responsivity_mv_per_mw_cm2 * irradiance * cfg.angular_gain(incidence_rad) * modulation_depth;
}

std::pair<double, double> wilson_interval(std::uint64_t k, std::uint64_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  // The interval always contains p; clamping also absorbs rounding at k = 0 and k = n.
  return {std::min(p, std::max(0.0, center - half)), std::max(p, std::min(1.0, center + half))};
}

double BerFit::predict(double snr) const {
  const double x = std::pow(10.0, snr / 10.0);
  return std::min(0.5, 0.5 * std::erfc(slope * (x - offset)));
}

double BerFit::crossing_snr_db(double ber) const {
  if (!valid || !(ber > 0.0 && ber < 0.5)) return std::numeric_limits<double>::quiet_NaN();
  const double x = offset + boost::math::erfc_inv(2.0 * ber) / slope;
  return x > 0.0 ? 10.0 * std::log10(x) : -std::numeric_limits<double>::infinity();
}

namespace {

// Probit-style regression: erfcinv(2 ber) is linear in the SNR ratio.
BerFit fit_ber_curve(const std::vector<BerPoint>& points) {
  std::vector<std::pair<double, double>> xy;
  for (const auto& p : points) {
    const double b = p.result.ber();
    if (b <= 0.0 || b >= 0.5) continue;
    xy.emplace_back(std::pow(10.0, p.snr_db / 10.0), boost::math::erfc_inv(2.0 * b));
  }
  BerFit fit;
  if (xy.size() < 2) return fit;
  double mx = 0, my = 0;
  for (const auto& [x, y] : xy) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(xy.size());
  my /= static_cast<double>(xy.size());
  double sxx = 0, sxy = 0;
  for (const auto& [x, y] : xy) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  if (sxx <= 0.0 || sxy <= 0.0) return fit;
  fit.slope = sxy / sxx;
  fit.offset = mx - my / fit.slope;
  fit.valid = true;
  return fit;
}

}  // namespace

BerSweepResult ber_sweep(std::span<const double> snr_points_db, std::uint64_t bits_per_point, std::uint64_t seed,
                         const FskConfig& fsk, const ChannelConfig& channel) {
  if (bits_per_point == 0) throw Error(ErrorCode::PreconditionViolated, "need at least one bit per point");
  fsk.alphabet.check_nyquist(fsk.adc_rate);

  std::vector<Symbol> nonzero;
  for (const auto& [sym, f] : fsk.alphabet.entries()) {
    if (f > 0.0) nonzero.push_back(sym);
  }
  if (nonzero.size() < 2) throw Error(ErrorCode::PreconditionViolated, "BER harness needs two tones");

  Rng bits_rng(derive_seed(seed, 0xB175));
  std::vector<Symbol> tx_symbols(bits_per_point);
  for (auto& s : tx_symbols) s = nonzero[bits_rng.next_u64() % 2];

  const Waveform tx = encode(tx_symbols, fsk.alphabet, fsk.symbol_duration_s, fsk.modulation_depth,
                             fsk.tx_sample_rate, fsk.rise_time_s);
  const double unit_vpp = signal_vpp_mv(1.0, 0.0, fsk.modulation_depth, channel);
  if (!(unit_vpp > 0.0)) throw Error(ErrorCode::PreconditionViolated, "channel has zero gain");

  BerSweepResult out;
  for (double snr : snr_points_db) {
    const double vpp = channel.noise_floor_mv * std::pow(10.0, snr / 10.0);
    const Waveform rx = channelize(tx, vpp / unit_vpp, 0.0, channel, derive_seed(seed, 0x7015E));
    const Waveform adc = adc_sample(rx, fsk.adc_rate, fsk.adc_bits, fsk.adc_vref, &fsk.alphabet);
    const auto decoded =
        decode_peak_timing(adc, fsk.alphabet, fsk.symbol_duration_s, fsk.peak_threshold_mv(channel), fsk.refractory_fraction);
    BerPoint p;
    p.snr_db = snr;
    p.result.bits_sent = tx_symbols.size();
    for (std::size_t i = 0; i < tx_symbols.size(); ++i) {
      if (i >= decoded.size() || decoded[i] != tx_symbols[i]) ++p.result.bit_errors;
    }
    std::tie(p.ci_low, p.ci_high) = wilson_interval(p.result.bit_errors, p.result.bits_sent);
    out.points.push_back(p);
  }
  out.fit = fit_ber_curve(out.points);
  return out;
}

double decode_current_model_ma(double adc_rate_hz) {
  if (!(adc_rate_hz >= kMinAdcRate)) {
    throw Error(ErrorCode::BelowMinimumRate, "decoding needs an ADC rate of at least 6.6 Hz");
  }
  return kRefDecodeCurrentMa * (adc_rate_hz - kMinAdcRate) / (kRefAdcRate - kMinAdcRate);
}

}  // namespace beamlink::fsk
