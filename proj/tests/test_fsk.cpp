#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"

#include "beamlink/error.hpp"
#include "beamlink/fsk.hpp"
#include "beamlink/rng.hpp"

using namespace beamlink;
using namespace beamlink::fsk;

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

std::vector<Symbol> random_symbols(std::size_t n, const SymbolAlphabet& alphabet, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Symbol> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(rng.uniform() * static_cast<double>(alphabet.entries().size()));
    out.push_back(alphabet.entries()[k].first);
  }
  return out;
}

std::vector<Symbol> link(const std::vector<Symbol>& symbols, double irradiance, const ChannelConfig& ch,
                         std::uint64_t seed) {
  const FskConfig fsk;
  const auto tx = encode(symbols, fsk.alphabet, fsk.symbol_duration_s, fsk.modulation_depth, fsk.tx_sample_rate);
  const auto rx = channelize(tx, irradiance, 0.0, ch, seed);
  const auto adc = adc_sample(rx, fsk.adc_rate, fsk.adc_bits, fsk.adc_vref, &fsk.alphabet);
  return decode_peak_timing(adc, fsk.alphabet, fsk.symbol_duration_s, fsk.peak_threshold_mv(ch));
}

}  // namespace

TEST_SUITE("fsk") {
  TEST_CASE("steering alphabet") {
    const auto a = SymbolAlphabet::steering();
    CHECK(a.frequency('L') == 12.5);
    CHECK(a.frequency('R') == 25.0);
    CHECK(a.frequency('F') == 0.0);
    CHECK(a.zero_symbol() == 'F');
    CHECK(a.shortest_period() == doctest::Approx(0.04));
    CHECK(code_of([&] { a.frequency('X'); }) == ErrorCode::UnknownSymbol);
    CHECK(code_of([] { SymbolAlphabet({{'A', 10.0}, {'A', 20.0}}); }) == ErrorCode::PreconditionViolated);
  }

  TEST_CASE("nyquist check") {
    const SymbolAlphabet a({{'A', 10.0}, {'B', 50.0}});
    CHECK_NOTHROW(a.check_nyquist(100.0));
    CHECK(code_of([&] { a.check_nyquist(99.0); }) == ErrorCode::NyquistViolation);
    CHECK(code_of([] { SymbolAlphabet({{'A', 60.0}}).check_nyquist(100.0); }) == ErrorCode::NyquistViolation);
  }

  TEST_CASE("encoded slots span the modulation depth") {
    const auto a = SymbolAlphabet::steering();
    const std::vector<Symbol> symbols{'L', 'F', 'R'};
    const auto w = encode(symbols, a, 0.16, 0.5);
    REQUIRE(w.samples.size() == 480);
    auto slot = [&](int k) { return std::span<const double>(w.samples).subspan(160 * k, 160); };
    for (int k : {0, 2}) {
      const auto s = slot(k);
      CHECK(*std::min_element(s.begin(), s.end()) == doctest::Approx(0.5));
      CHECK(*std::max_element(s.begin(), s.end()) == doctest::Approx(1.0));
      double mean = 0.0;
      for (double v : s) mean += v / 160.0;
      CHECK(mean == doctest::Approx(0.75));
    }
    for (double v : slot(1)) CHECK(v == 1.0);
  }

  TEST_CASE("slot must hold whole periods") {
    const auto a = SymbolAlphabet::steering();
    const std::vector<Symbol> symbols{'L'};
    CHECK(code_of([&] { encode(symbols, a, 0.1, 0.5); }) == ErrorCode::BadDuration);
    CHECK(code_of([&] { encode(symbols, a, 0.0, 0.5); }) == ErrorCode::BadDuration);
    CHECK_NOTHROW(encode(symbols, a, 0.08, 0.5));
  }

  TEST_CASE("RC cutoff") {
    const ChannelConfig ch;
    CHECK(ch.cutoff_hz() == doctest::Approx(1.0 / (2.0 * std::numbers::pi * 0.47)));
    CHECK(ch.noise_rms_mv() == doctest::Approx(8.0 / 6.0));
  }

  TEST_CASE("high-pass step response decays with the RC constant") {
    ChannelConfig ch;
    ch.start_at_rest = true;
    ch.responsivity_mv_per_mw_cm2 = 1000.0;  // 1 V per unit irradiance
    const double fs = 1000.0;
    ReceiverChannel rx(ch, fs, 1);
    std::vector<double> y;
    for (int n = 0; n < 2000; ++n) y.push_back(rx.push_clean(1.0, 1.0, 0.0));
    CHECK(y[0] == doctest::Approx(1.0).epsilon(0.002));
    const int tau = static_cast<int>(std::lround(ch.time_constant_s() * fs));
    CHECK(y[tau] == doctest::Approx(std::exp(-1.0)).epsilon(0.005));
    CHECK(y[3 * tau] == doctest::Approx(std::exp(-3.0)).epsilon(0.01));
  }

  TEST_CASE("settled square wave swing matches the analytic high-pass response") {
    ChannelConfig ch;
    const auto a = SymbolAlphabet::steering();
    const std::vector<Symbol> symbols(40, 'R');
    const auto tx = encode(symbols, a, 0.16, 0.5);
    ReceiverChannel rx(ch, tx.sample_rate, 1);
    std::vector<double> y;
    for (double v : tx.samples) y.push_back(rx.push_clean(v, 100.0, 0.0));
    // Last second only; the filter has settled after ~12 time constants.
    const auto tail = std::span<const double>(y).last(1000);
    const double vpp = 1e3 * (*std::max_element(tail.begin(), tail.end()) - *std::min_element(tail.begin(), tail.end()));
    const double step = signal_vpp_mv(100.0, 0.0, 0.5, ch);
    const double d = std::exp(-0.02 / ch.time_constant_s());  // decay over half a 25 Hz period
    CHECK(vpp == doctest::Approx(2.0 * step / (1.0 + d)).epsilon(0.01));
  }

  TEST_CASE("angular response") {
    const ChannelConfig ch;
    CHECK(ch.angular_gain(0.0) == 1.0);
    CHECK(ch.angular_gain(80.0 * std::numbers::pi / 180.0) == doctest::Approx(0.5));
    double prev = 1.0;
    for (int deg = 5; deg <= 85; deg += 5) {
      const double g = ch.angular_gain(deg * std::numbers::pi / 180.0);
      CHECK(g < prev);
      prev = g;
    }
  }

  TEST_CASE("ambient presets") {
    ChannelConfig ch;
    ch.apply_ambient_preset("dark_4lx");
    CHECK(ch.noise_floor_mv == 11.0);
    CHECK(code_of([&] { ch.apply_ambient_preset("moonlight"); }) == ErrorCode::ConfigError);
  }

  TEST_CASE("ADC quantization error is at most half an LSB") {
    const double vref = 0.6;
    const double lsb = vref / 16384.0;
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
      const double v = rng.uniform(-0.29, 0.29);
      CHECK(std::abs(adc_quantize(v, 14, vref) - v) <= 0.5 * lsb + 1e-15);
    }
    CHECK(adc_quantize(5.0, 14, vref) == doctest::Approx(8191 * lsb));
    CHECK(adc_quantize(-5.0, 14, vref) == doctest::Approx(-8192 * lsb));
  }

  TEST_CASE("ADC decimates by nearest sample") {
    Waveform w;
    for (int n = 0; n < 1000; ++n) w.samples.push_back(1e-4 * n);
    const auto adc = adc_sample(w, 100.0, 20, 1.0);
    REQUIRE(adc.samples.size() == 100);
    CHECK(adc.samples[7] == doctest::Approx(w.samples[70]).epsilon(1e-5));
    CHECK(code_of([&] { adc_sample(w, 2000.0, 14, 0.6); }) == ErrorCode::PreconditionViolated);
  }

  TEST_CASE("peak timing decodes clean tones") {
    const auto a = SymbolAlphabet::steering();
    for (auto [sym, f] : a.entries()) {
      std::vector<double> slot;
      for (int n = 0; n < 16; ++n) slot.push_back(f > 0 ? 0.02 * std::sin(2.0 * std::numbers::pi * f * (n + 0.3) / 100.0) : 0.0);
      CHECK(decode_slot(slot, 100.0, a, 4.0) == sym);
    }
  }

  TEST_CASE("strong link decodes every symbol") {
    const auto a = SymbolAlphabet::steering();
    const auto symbols = random_symbols(300, a, 5);
    CHECK(link(symbols, 110.0, ChannelConfig{}, 9) == symbols);
  }

  TEST_CASE("snr is ten log ratio of swing to noise floor") {
    CHECK(snr_db(16.0, 8.0) == doctest::Approx(10.0 * std::log10(2.0)));
    CHECK(snr_db(80.0, 8.0) == doctest::Approx(10.0));
    CHECK(std::isinf(snr_db(0.0, 8.0)));
    CHECK(code_of([] { snr_db(1.0, 0.0); }) == ErrorCode::PreconditionViolated);
  }

  TEST_CASE("wilson interval") {
    const auto [lo0, hi0] = wilson_interval(0, 10000);
    CHECK(lo0 == 0.0);
    CHECK(hi0 == doctest::Approx(1.96 * 1.96 / (10000 + 1.96 * 1.96)));
    const auto [lo, hi] = wilson_interval(50, 100);
    CHECK(lo == doctest::Approx(0.4038).epsilon(1e-3));
    CHECK(hi == doctest::Approx(0.5962).epsilon(1e-3));
  }

  TEST_CASE("ber sweep is deterministic and falls with snr") {
    const std::vector<double> snr{-10.0, 0.0, 3.01, 6.0};
    const auto a = ber_sweep(snr, 1500, 77);
    const auto b = ber_sweep(snr, 1500, 77);
    REQUIRE(a.points.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(a.points[i].result.bit_errors == b.points[i].result.bit_errors);
      CHECK(a.points[i].ci_low <= a.points[i].result.ber());
      CHECK(a.points[i].ci_high >= a.points[i].result.ber());
    }
    CHECK(a.points[0].result.ber() > 0.2);
    CHECK(a.points[1].result.ber() > a.points[2].result.ber());
    CHECK(a.points[2].result.pre_fec_pass());
    CHECK(a.points[3].result.bit_errors == 0);
  }

  TEST_CASE("fitted curve inverts") {
    const std::vector<double> snr{-6.0, -3.0, -1.0, 0.0, 1.0, 2.0};
    const auto sweep = ber_sweep(snr, 2000, 3);
    REQUIRE(sweep.fit.valid);
    const double x = sweep.fit.crossing_snr_db(kPreFecBer);
    CHECK(sweep.fit.predict(x) == doctest::Approx(kPreFecBer).epsilon(1e-6));
    CHECK(x < 3.01);
  }

  TEST_CASE("decode current model") {
    CHECK(decode_current_model_ma(6.6) == doctest::Approx(0.0));
    CHECK(decode_current_model_ma(100.0) == doctest::Approx(0.3));
    CHECK(decode_current_model_ma(53.3) == doctest::Approx(0.15));
    CHECK(code_of([] { decode_current_model_ma(5.0); }) == ErrorCode::BelowMinimumRate);
  }
}
