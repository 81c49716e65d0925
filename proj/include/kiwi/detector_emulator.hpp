#pragma once

// Statistical stand-ins for trained detectors. Ground truth goes in; a
// detection stream with the profile's expected precision and recall comes
// out, together with the profile's per-frame latency.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "kiwi/core.hpp"

namespace kiwi {

struct DetectorProfile {
  std::string name;
  double precision_target = 1.0;
  double recall_target = 1.0;
  double latency_ms = 0.0;
  double center_jitter_sigma = 1.0;  // pixels
  double score_min = 0.5;
  double score_max = 1.0;

  // Throws Error(config).
  void validate() const;
};

// Faster R-CNN NAS, Faster R-CNN Inception V2, SSD Inception V2.
const DetectorProfile& profile_nas();
const DetectorProfile& profile_frcnn_iv2();
const DetectorProfile& profile_ssd_iv2();

// "nas", "frcnn_iv2", "ssd_iv2", or "file:<cfg>" with a [profile] section.
DetectorProfile resolve_profile(std::string_view spec);
DetectorProfile load_profile(const std::filesystem::path& path);

struct FrameSize {
  int width = kDefaultWidth;
  int height = kDefaultHeight;
};

// Emulated detections for every image present in `gt`. Output is sorted by
// (image_id, record index): kept ground truth keeps its index within the
// image, false positives follow. Identical for identical (gt, profile, seed).
std::vector<Detection> emulate(std::span<const Detection> gt, const DetectorProfile& profile, std::uint64_t seed,
                               FrameSize frame = {});

// Single-image variant; `gt` must share one image_id.
std::vector<Detection> emulate_image(std::span<const Detection> gt, const DetectorProfile& profile,
                                     std::uint64_t seed, FrameSize frame = {});

using DetectionsByImage = std::map<std::string, std::vector<Detection>, std::less<>>;

// Reads a detection JSONL file and groups it by image_id, preserving order.
DetectionsByImage replay(const std::filesystem::path& path);
DetectionsByImage group_by_image(std::span<const Detection> detections);

// availability = timestamp + latency.
std::vector<double> simulate_latency(const DetectorProfile& profile, std::span<const double> frame_timestamps);

// Deterministic 64-bit key for (seed, image_id, record index).
std::uint64_t record_key(std::uint64_t seed, std::string_view image_id, std::uint64_t index);

}  // namespace kiwi
