#include "beamlink/tracker.hpp"

#include <algorithm>
#include <numeric>

#include "beamlink/error.hpp"

namespace beamlink::tracker {

std::uint64_t Histogram256::total() const {
  return std::accumulate(bins.begin(), bins.end(), std::uint64_t{0});
}

Histogram256 Histogram256::of(const SyntheticImage& image) {
  Histogram256 h;
  for (std::uint8_t p : image.pixels) ++h.bins[p];
  return h;
}

int otsu_threshold(const Histogram256& hist) {
  int occupied = 0;
  std::int64_t N = 0, S = 0;
  for (int v = 0; v < 256; ++v) {
    const auto c = static_cast<std::int64_t>(hist.bins[static_cast<std::size_t>(v)]);
    if (c > 0) ++occupied;
    N += c;
    S += c * v;
  }
  if (occupied < 2) throw Error(ErrorCode::DegenerateHistogram, "histogram has a single occupied bin");

  // sigma_b^2 = (N*S0 - n0*S)^2 / (N^2 * n0 * n1); the numerator is exact in
  // integers so equal splits compare equal.
  int best_t = -1;
  long double best = -1.0L;
  std::int64_t n0 = 0, S0 = 0;
  for (int t = 1; t < 256; ++t) {
    const auto c = static_cast<std::int64_t>(hist.bins[static_cast<std::size_t>(t - 1)]);
    n0 += c;
    S0 += c * (t - 1);
    const std::int64_t n1 = N - n0;
    if (n0 == 0 || n1 == 0) continue;
    const auto num = static_cast<long double>(N * S0 - n0 * S);
    const long double val = num * num / (static_cast<long double>(n0) * static_cast<long double>(n1));
    if (val > best) {
      best = val;
      best_t = t;
    }
  }
  return best_t;
}

std::vector<Blob> detect_blobs(const SyntheticImage& image, int threshold, int min_area) {
  const int W = image.width, H = image.height;
  std::vector<int> label(static_cast<std::size_t>(W) * static_cast<std::size_t>(H), -1);
  std::vector<Blob> blobs;
  std::vector<std::pair<int, int>> stack;
  auto idx = [W](int x, int y) { return static_cast<std::size_t>(y) * static_cast<std::size_t>(W) + static_cast<std::size_t>(x); };

  int next = 0;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      if (image.at(x, y) < threshold || label[idx(x, y)] >= 0) continue;
      Blob b;
      b.bbox = {x, y, x, y};
      double wsum = 0.0, wx = 0.0, wy = 0.0;
      stack.clear();
      stack.emplace_back(x, y);
      label[idx(x, y)] = next;
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        const std::uint8_t v = image.at(cx, cy);
        ++b.area;
        b.peak_intensity = std::max(b.peak_intensity, v);
        wsum += v;
        wx += static_cast<double>(v) * cx;
        wy += static_cast<double>(v) * cy;
        b.bbox.x0 = std::min(b.bbox.x0, cx);
        b.bbox.y0 = std::min(b.bbox.y0, cy);
        b.bbox.x1 = std::max(b.bbox.x1, cx);
        b.bbox.y1 = std::max(b.bbox.y1, cy);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = cx + dx, ny = cy + dy;
            if (nx < 0 || ny < 0 || nx >= W || ny >= H) continue;
            if (image.at(nx, ny) < threshold || label[idx(nx, ny)] >= 0) continue;
            label[idx(nx, ny)] = next;
            stack.emplace_back(nx, ny);
          }
        }
      }
      ++next;
      if (b.area < min_area) continue;
      if (wsum > 0.0) {
        b.centroid = Vec2(wx / wsum + image.x0, wy / wsum + image.y0);
      } else {
        b.centroid = Vec2(0.5 * (b.bbox.x0 + b.bbox.x1) + image.x0, 0.5 * (b.bbox.y0 + b.bbox.y1) + image.y0);
      }
      b.bbox = {b.bbox.x0 + image.x0, b.bbox.y0 + image.y0, b.bbox.x1 + image.x0, b.bbox.y1 + image.y0};
      blobs.push_back(b);
    }
  }
  std::stable_sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) { return a.area > b.area; });
  return blobs;
}

Blob select_target(std::span<const Blob> blobs, const std::optional<Vec2>& predicted) {
  if (blobs.empty()) throw Error(ErrorCode::NoBlobs, "no candidate blobs");
  if (predicted) {
    return *std::min_element(blobs.begin(), blobs.end(), [&](const Blob& a, const Blob& b) {
      return (a.centroid - *predicted).squaredNorm() < (b.centroid - *predicted).squaredNorm();
    });
  }
  return *std::max_element(blobs.begin(), blobs.end(),
                           [](const Blob& a, const Blob& b) { return a.area < b.area; });
}

std::optional<Blob> detect_tag(const SyntheticImage& image, const TrackerConfig& cfg,
                               const std::optional<Vec2>& predicted) {
  const Histogram256 hist = Histogram256::of(image);
  int t = 0;
  try {
    t = otsu_threshold(hist);
  } catch (const Error&) {
    return std::nullopt;
  }
  double n0 = 0, s0 = 0, n1 = 0, s1 = 0;
  for (int v = 0; v < 256; ++v) {
    const auto c = static_cast<double>(hist.bins[static_cast<std::size_t>(v)]);
    (v < t ? n0 : n1) += c;
    (v < t ? s0 : s1) += c * v;
  }
  if (n0 == 0 || n1 == 0 || s1 / n1 - s0 / n0 < cfg.min_class_separation) return std::nullopt;
  const auto blobs = detect_blobs(image, t, cfg.min_area);
  if (blobs.empty()) return std::nullopt;
  return select_target(blobs, predicted);
}

void write_mask_pgm(const SyntheticImage& image, int threshold, const std::filesystem::path& path) {
  SyntheticImage mask = image;
  for (auto& p : mask.pixels) p = p >= threshold ? 255 : 0;
  optosim::write_pgm(mask, path);
}

}  // namespace beamlink::tracker
