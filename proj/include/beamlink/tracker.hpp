#pragma once

// Retroreflective tag detection: Otsu binarization, 8-connected components,
// intensity-weighted centroids.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "beamlink/geom.hpp"
#include "beamlink/optosim.hpp"

namespace beamlink::tracker {

using geom::Vec2;
using optosim::SyntheticImage;

struct Histogram256 {
  std::array<std::uint64_t, 256> bins{};

  std::uint64_t total() const;
  static Histogram256 of(const SyntheticImage& image);
};

/// Threshold t maximizing inter-class variance, where pixels >= t are
/// foreground. Ties go to the lowest t. Throws DegenerateHistogram when
/// fewer than two bins are occupied.
int otsu_threshold(const Histogram256& hist);

struct BoundingBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive, full-sensor pixel coordinates
};

struct Blob {
  Vec2 centroid = Vec2::Zero();  // intensity weighted, full-sensor coordinates
  int area = 0;                  // pixels
  std::uint8_t peak_intensity = 0;
  BoundingBox bbox;
};

struct TrackerConfig {
  int min_area = 4;
  // Minimum gap between the Otsu class means before a frame is trusted to
  // contain a tag at all.
  double min_class_separation = 30.0;
};

/// Components of pixels >= threshold, filtered by min_area, largest first.
std::vector<Blob> detect_blobs(const SyntheticImage& image, int threshold, int min_area = 4);

/// Nearest blob to the prediction, or the largest when there is none.
/// Throws NoBlobs on an empty list.
Blob select_target(std::span<const Blob> blobs, const std::optional<Vec2>& predicted = std::nullopt);

/// Full frame-to-centroid step used by the tracking loop.
std::optional<Blob> detect_tag(const SyntheticImage& image, const TrackerConfig& cfg,
                               const std::optional<Vec2>& predicted = std::nullopt);

/// Debug dump of the binarized mask (255 foreground, 0 background).
void write_mask_pgm(const SyntheticImage& image, int threshold, const std::filesystem::path& path);

}  // namespace beamlink::tracker
