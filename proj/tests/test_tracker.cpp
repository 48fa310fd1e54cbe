#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <vector>

#include "doctest.h"

#include "beamlink/error.hpp"
#include "beamlink/rng.hpp"
#include "beamlink/tracker.hpp"

using namespace beamlink;
using namespace beamlink::tracker;

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

// Exhaustive Otsu in exact arithmetic: the between-class variance of the
// split "value >= t" is proportional to (N*S0 - n0*S)^2 / (n0*n1), compared by
// cross-multiplying. Strict improvement keeps the lowest t on ties.
int brute_force_otsu(const Histogram256& h) {
  using u128 = unsigned __int128;
  std::int64_t N = 0, S = 0;
  for (int v = 0; v < 256; ++v) {
    N += static_cast<std::int64_t>(h.bins[v]);
    S += static_cast<std::int64_t>(h.bins[v]) * v;
  }
  int best = -1;
  u128 best_num = 0, best_den = 1;
  for (int t = 1; t < 256; ++t) {
    std::int64_t n0 = 0, s0 = 0;
    for (int v = 0; v < t; ++v) {
      n0 += static_cast<std::int64_t>(h.bins[v]);
      s0 += static_cast<std::int64_t>(h.bins[v]) * v;
    }
    if (n0 == 0 || n0 == N) continue;
    const auto d = static_cast<u128>(std::llabs(N * s0 - n0 * S));
    const u128 num = d * d, den = static_cast<u128>(n0) * static_cast<u128>(N - n0);
    if (best < 0 || num * best_den > best_num * den) {
      best = t;
      best_num = num;
      best_den = den;
    }
  }
  return best;
}

SyntheticImage blank(int w, int h, std::uint8_t value = 0) {
  SyntheticImage img;
  img.width = w;
  img.height = h;
  img.pixels.assign(static_cast<std::size_t>(w) * h, value);
  return img;
}

void fill(SyntheticImage& img, int x0, int y0, int w, int h, std::uint8_t value) {
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) img.at(x, y) = value;
}

}  // namespace

TEST_SUITE("tracker") {
  TEST_CASE("two spikes split just above the lower one") {
    Histogram256 h;
    h.bins[10] = 500;
    h.bins[200] = 20;
    CHECK(otsu_threshold(h) == 11);
  }

  TEST_CASE("otsu matches an exhaustive search") {
    Rng rng(31);
    for (int trial = 0; trial < 200; ++trial) {
      Histogram256 h;
      const int modes = 1 + static_cast<int>(rng.uniform() * 3);
      for (int m = 0; m < modes; ++m) {
        const double mean = rng.uniform(0, 255), sd = rng.uniform(2, 40);
        const int n = 100 + static_cast<int>(rng.uniform() * 5000);
        for (int i = 0; i < n; ++i) {
          const int v = static_cast<int>(std::lround(rng.gaussian(mean, sd)));
          ++h.bins[std::clamp(v, 0, 255)];
        }
      }
      CHECK(otsu_threshold(h) == brute_force_otsu(h));
    }
  }

  TEST_CASE("threshold ignores a uniform scale of the counts") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
      Histogram256 h, scaled;
      for (int v = 0; v < 256; ++v) {
        h.bins[v] = static_cast<std::uint64_t>(rng.uniform() * 50);
        scaled.bins[v] = 7 * h.bins[v];
      }
      CHECK(otsu_threshold(h) == otsu_threshold(scaled));
    }
  }

  TEST_CASE("threshold shifts with the intensities") {
    Histogram256 h, shifted;
    for (int v = 20; v < 120; ++v) h.bins[v] = static_cast<std::uint64_t>(v % 7 + (v > 80 ? 30 : 3));
    for (int v = 20; v < 120; ++v) shifted.bins[v + 50] = h.bins[v];
    CHECK(otsu_threshold(shifted) == otsu_threshold(h) + 50);
  }

  TEST_CASE("single occupied bin is degenerate") {
    Histogram256 h;
    CHECK(code_of([&] { otsu_threshold(h); }) == ErrorCode::DegenerateHistogram);
    h.bins[77] = 1000;
    CHECK(code_of([&] { otsu_threshold(h); }) == ErrorCode::DegenerateHistogram);
  }

  TEST_CASE("histogram counts every pixel") {
    auto img = blank(40, 30, 5);
    fill(img, 0, 0, 10, 10, 250);
    const auto h = Histogram256::of(img);
    CHECK(h.total() == 1200);
    CHECK(h.bins[250] == 100);
    CHECK(h.bins[5] == 1100);
  }

  TEST_CASE("square blob centroid") {
    auto img = blank(200, 120);
    fill(img, 100, 50, 10, 10, 200);
    const auto blobs = detect_blobs(img, 128);
    REQUIRE(blobs.size() == 1);
    CHECK(blobs[0].centroid.x() == doctest::Approx(104.5));
    CHECK(blobs[0].centroid.y() == doctest::Approx(54.5));
    CHECK(blobs[0].area == 100);
    CHECK(blobs[0].peak_intensity == 200);
    CHECK(blobs[0].bbox.x0 == 100);
    CHECK(blobs[0].bbox.y1 == 59);
  }

  TEST_CASE("centroid is intensity weighted and in sensor coordinates") {
    auto img = blank(20, 10);
    img.x0 = 300;
    img.y0 = 400;
    fill(img, 5, 5, 2, 1, 100);
    img.at(6, 5) = 200;  // weights 100 and 200
    const auto blobs = detect_blobs(img, 50, 1);
    REQUIRE(blobs.size() == 1);
    CHECK(blobs[0].centroid.x() == doctest::Approx(300 + 5 + 2.0 / 3.0));
    CHECK(blobs[0].centroid.y() == doctest::Approx(405));
  }

  TEST_CASE("diagonal neighbours join one component") {
    auto img = blank(20, 20);
    for (int i = 0; i < 6; ++i) img.at(3 + i, 3 + i) = 255;
    const auto blobs = detect_blobs(img, 128, 1);
    REQUIRE(blobs.size() == 1);
    CHECK(blobs[0].area == 6);
  }

  TEST_CASE("blobs are filtered by area and sorted largest first") {
    auto img = blank(100, 100);
    fill(img, 10, 10, 3, 3, 220);
    fill(img, 50, 50, 6, 6, 220);
    fill(img, 90, 90, 1, 1, 220);  // below min_area
    const auto blobs = detect_blobs(img, 128, 4);
    REQUIRE(blobs.size() == 2);
    CHECK(blobs[0].area == 36);
    CHECK(blobs[1].area == 9);
  }

  TEST_CASE("select_target prefers the blob nearest the prediction") {
    std::vector<Blob> blobs(2);
    blobs[0].centroid = {500, 500};
    blobs[0].area = 50;
    blobs[1].centroid = {100, 100};
    blobs[1].area = 10;
    CHECK(select_target(blobs).area == 50);
    CHECK(select_target(blobs, Vec2(110, 95)).area == 10);
    CHECK(code_of([] { select_target(std::vector<Blob>{}); }) == ErrorCode::NoBlobs);
  }

  TEST_CASE("black frame has no tag") {
    const auto img = blank(64, 48);
    CHECK(detect_blobs(img, 1).empty());
    CHECK_FALSE(detect_tag(img, TrackerConfig{}));
  }

  TEST_CASE("low contrast frame is rejected") {
    auto img = blank(64, 48, 20);
    fill(img, 10, 10, 5, 5, 35);  // class means only 15 apart
    CHECK_FALSE(detect_tag(img, TrackerConfig{}));
    fill(img, 10, 10, 5, 5, 220);
    const auto tag = detect_tag(img, TrackerConfig{});
    REQUIRE(tag);
    CHECK(tag->centroid.x() == doctest::Approx(12.0));
  }
}
