#pragma once

// Color-filter flower baseline, four stages:
//   1. HSV filter for white (stigma) and yellow (petal) pixels
//   2. multi-scale center-surround luminance saliency
//   3. merge: color mask gated by saliency
//   4. blob detection on the merged mask, filtered by size and convexity

#include <cstdint>
#include <filesystem>
#include <vector>

#include "kiwi/core.hpp"

namespace kiwi {

template <typename T>
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int w, int h, T fill = T{})
      : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  T& operator()(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  const T& operator()(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool same_shape(const auto& other) const { return width == other.width && height == other.height; }
};

using Mask = Grid<std::uint8_t>;  // 0 or 1
using FloatMap = Grid<float>;

struct ColorFilterConfig {
  double white_sat_max = 0.25;
  double white_val_min = 0.70;
  double yellow_hue_min = 40.0;  // degrees
  double yellow_hue_max = 70.0;
  double yellow_sat_min = 0.30;
  double yellow_val_min = 0.50;

  void validate() const;
};

struct SaliencyConfig {
  std::vector<int> scales{1, 2, 4};  // downsample factors
  int surround_radius = 16;          // box radius, in pixels of each scale's grid
  int blur_passes = 1;               // repeated box passes; 3 approximates a Gaussian
  bool normalize = true;

  void validate() const;
};

struct BlobConfig {
  double min_area = 40.0;
  double max_area = 20000.0;
  double min_convexity = 0.7;
  double merge_threshold = 0.1;

  void validate() const;
};

struct DetectorConfig {
  ColorFilterConfig color;
  SaliencyConfig saliency;
  BlobConfig blob;
  // Output boxes are shrunk about the blob centroid by this factor so they
  // approximate the stigma disc inside the bright flower region. 1 keeps the
  // raw blob bbox.
  double stigma_scale = 0.4;

  void validate() const;
};

// Sections [color], [saliency], [blob], [output]; missing keys keep defaults.
DetectorConfig load_detector_config(const std::filesystem::path& path);
DetectorConfig parse_detector_config(std::string_view text);

struct PixelRun {
  int y = 0;
  int x0 = 0;  // inclusive
  int x1 = 0;  // inclusive
};

struct Blob {
  double centroid_x = 0.0;  // mean of member pixel centers
  double centroid_y = 0.0;
  double area = 0.0;        // pixel count
  double convexity = 0.0;   // area / convex hull area, hull over pixel corners
  BBox bbox;
  std::vector<PixelRun> runs;
};

Mask hsv_filter(const ImageFrame& frame, const ColorFilterConfig& cfg);

FloatMap saliency_map(const ImageFrame& frame, const SaliencyConfig& cfg);

// color_mask AND (saliency >= threshold). Throws Error(invalid_input) on a shape mismatch.
Mask merge_masks(const Mask& color_mask, const FloatMap& saliency, double threshold);

// 8-connected components passing the size and convexity filters, sorted by
// area descending, then centroid y, then centroid x.
std::vector<Blob> blob_detect(const Mask& mask, const BlobConfig& cfg);

// Full four-stage pipeline. Each detection carries the raw blob bbox and the
// blob's mean saliency as score.
std::vector<Detection> detect(const ImageFrame& frame, const DetectorConfig& cfg);

// Shrinks each box about its center by `scale`, clipped to the frame.
std::vector<Detection> crop_to_stigma(std::vector<Detection> detections, double scale, int width, int height);

// detect() followed by crop_to_stigma(cfg.stigma_scale).
std::vector<Detection> detect_stigmas(const ImageFrame& frame, const DetectorConfig& cfg);

}  // namespace kiwi
