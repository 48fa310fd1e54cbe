#pragma once

// Optical FSK link: square-wave power modulation, photodiode + RC high-pass
// receiver, ADC, and FFT-free peak-timing demodulation. Also hosts the
// SNR -> BER measurement harness.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "beamlink/rng.hpp"

namespace beamlink::fsk {

using Symbol = char;

/// Symbol -> modulation frequency. A 0 Hz entry means unmodulated full power.
class SymbolAlphabet {
 public:
  SymbolAlphabet() = default;
  explicit SymbolAlphabet(std::vector<std::pair<Symbol, double>> entries);

  /// {L: 12.5 Hz, R: 25 Hz, F: 0 Hz}
  static SymbolAlphabet steering();
  /// {L: 12.5 Hz, R: 25 Hz}; one bit per symbol.
  static SymbolAlphabet binary();

  double frequency(Symbol s) const;  // throws UnknownSymbol
  bool contains(Symbol s) const;
  double max_frequency() const;
  double shortest_period() const;    // of the nonzero frequencies
  std::optional<Symbol> zero_symbol() const;
  const std::vector<std::pair<Symbol, double>>& entries() const { return entries_; }
  /// Throws NyquistViolation when the highest frequency exceeds adc_rate / 2.
  void check_nyquist(double adc_rate_hz) const;

 private:
  std::vector<std::pair<Symbol, double>> entries_;
};

struct Waveform {
  double sample_rate = 1000.0;  // Hz
  double start_time = 0.0;      // s
  std::vector<double> samples;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct ChannelConfig {
  double resistance_ohm = 470e3;
  double capacitance_f = 1e-6;
  double noise_floor_mv = 8.0;  // peak-to-peak noise floor at the ADC node
  std::map<std::string, double> ambient_noise_floor_mv{
      {"dark_4lx", 11.0}, {"office_600lx", 8.0}, {"bright_744lx", 7.6},
      {"overcast_8000lx", 6.5}, {"sunlight_50000lx", 5.5}};
  double responsivity_mv_per_mw_cm2 = 0.82;  // ADC-node volts per unit modulated irradiance
  double angular_3db_deg = 80.0;
  double angular_order = 4.0;
  bool start_at_rest = false;  // otherwise the filter starts settled on the first sample

  double cutoff_hz() const;
  double time_constant_s() const { return resistance_ohm * capacitance_f; }
  double noise_rms_mv() const { return noise_floor_mv / 6.0; }
  /// Photodiode gain versus incidence; halves the signal at angular_3db_deg.
  double angular_gain(double incidence_rad) const;
  /// Selects a noise floor from the ambient table; throws ConfigError.
  void apply_ambient_preset(const std::string& name);
};

struct FskConfig {
  SymbolAlphabet alphabet = SymbolAlphabet::steering();
  double symbol_duration_s = 0.160;
  double modulation_depth = 0.5;
  double tx_sample_rate = 1000.0;
  double rise_time_s = 0.0;  // power-supply edge slew, 0 = ideal edges
  double adc_rate = 100.0;
  int adc_bits = 14;
  double adc_vref = 0.6;     // full-scale span, volts (signed codes)
  // Peak threshold as a fraction of the noise floor (0.5 N = 3 sigma).
  double peak_threshold_ratio = 0.5;
  double refractory_fraction = 0.4;

  double peak_threshold_mv(const ChannelConfig& ch) const;
};

/// Laser power multiplier in [1 - depth, 1]; F slots stay at 1. The slot
/// must hold a whole number of periods of every nonzero frequency.
Waveform encode(std::span<const Symbol> symbols, const SymbolAlphabet& alphabet,
                double symbol_duration_s, double modulation_depth, double sample_rate = 1000.0,
                double rise_time_s = 0.0);

/// Streaming photodiode + high-pass receiver.
class ReceiverChannel {
 public:
  ReceiverChannel(const ChannelConfig& cfg, double sample_rate, std::uint64_t seed);

  /// One sample: tx power multiplier, irradiance (mW/cm^2), incidence (rad) -> volts.
  double push(double tx, double irradiance, double incidence_rad);
  /// Same as push without the additive noise.
  double push_clean(double tx, double irradiance, double incidence_rad);

 private:
  double filter(double input);

  ChannelConfig cfg_;
  double b_ = 0.0;  // K / (1 + K)
  double a_ = 0.0;  // (K - 1) / (K + 1)
  double prev_in_ = 0.0;
  double prev_out_ = 0.0;
  bool primed_ = false;
  Rng rng_;
};

Waveform channelize(const Waveform& tx, double irradiance, double incidence_rad,
                    const ChannelConfig& cfg, std::uint64_t seed);

/// Signed quantization of one sample to the ADC grid (volts in, volts out).
double adc_quantize(double volts, int resolution_bits, double vref);

/// Nearest-sample decimation plus signed quantization. Throws
/// NyquistViolation when `alphabet` is given and cannot be sampled.
Waveform adc_sample(const Waveform& w, double adc_rate, int resolution_bits, double vref,
                    const SymbolAlphabet* alphabet = nullptr);

/// Peak-timing decode of one symbol slot.
Symbol decode_slot(std::span<const double> samples, double sample_rate,
                   const SymbolAlphabet& alphabet, double peak_threshold_mv,
                   double refractory_fraction = 0.4);

/// Splits the ADC stream into slots of `symbol_duration_s` and decodes each.
std::vector<Symbol> decode_peak_timing(const Waveform& adc, const SymbolAlphabet& alphabet,
                                       double symbol_duration_s, double peak_threshold_mv,
                                       double refractory_fraction = 0.4);

struct SnrMeasurement {
  double vpp_mv = 0.0;
  double noise_floor_mv = 8.0;
  double snr_db() const;
};

double snr_db(double vpp_mv, double noise_floor_mv);
/// Peak-to-peak ADC swing for a given operating point.
double signal_vpp_mv(double irradiance, double incidence_rad, double modulation_depth,
                     const ChannelConfig& cfg);

inline constexpr double kPreFecBer = 3.8e-3;

struct BerResult {
  std::uint64_t bits_sent = 0;
  std::uint64_t bit_errors = 0;
  double ber() const {
    return bits_sent == 0 ? 0.0 : static_cast<double>(bit_errors) / static_cast<double>(bits_sent);
  }
  bool pre_fec_pass() const { return ber() <= kPreFecBer; }
};

/// 95% Wilson score interval for k successes out of n.
std::pair<double, double> wilson_interval(std::uint64_t k, std::uint64_t n, double z = 1.96);

/// ber(x) = 0.5 * erfc(slope * (x - offset)), x = vpp / N (linear ratio).
struct BerFit {
  bool valid = false;
  double slope = 0.0;
  double offset = 0.0;
  double predict(double snr_db) const;
  /// SNR (dB) at which the fitted curve crosses `ber`.
  double crossing_snr_db(double ber) const;
};

struct BerPoint {
  double snr_db = 0.0;
  BerResult result;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct BerSweepResult {
  std::vector<BerPoint> points;
  BerFit fit;
};

/// Full encode -> channel -> ADC -> decode run at each SNR. Each symbol counts
/// as one bit. Every point reuses the same symbols and noise stream (common
/// random numbers), so only the signal level changes between points.
BerSweepResult ber_sweep(std::span<const double> snr_points_db, std::uint64_t bits_per_point,
                         std::uint64_t seed, const FskConfig& fsk = FskConfig{.alphabet = SymbolAlphabet::binary()},
                         const ChannelConfig& channel = {});

/// Extra decoding current (mA) at an ADC rate, affine through 0 mA at
/// 6.6 Hz and 0.3 mA at 100 Hz. Throws BelowMinimumRate.
double decode_current_model_ma(double adc_rate_hz);

}  // namespace beamlink::fsk
