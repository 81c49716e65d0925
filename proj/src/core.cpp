#include "kiwi/core.hpp"

#include <algorithm>
#include <array>

namespace kiwi {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_input: return "invalid input";
    case ErrorCode::parse: return "parse error";
    case ErrorCode::validation: return "validation error";
    case ErrorCode::config: return "config error";
    case ErrorCode::io: return "i/o error";
    case ErrorCode::degenerate_geometry: return "degenerate geometry";
    case ErrorCode::behind_camera: return "point behind camera";
    case ErrorCode::target_unreachable: return "target unreachable";
    case ErrorCode::too_late: return "too late";
    case ErrorCode::generation: return "generation error";
    case ErrorCode::shutdown: return "shut down";
  }
  return "unknown error";
}

std::string_view to_string(Camera camera) {
  return camera == Camera::left ? "left" : "right";
}

Camera camera_from_string(std::string_view text) {
  if (text == "left") return Camera::left;
  if (text == "right") return Camera::right;
  throw Error(ErrorCode::parse, "unknown camera '" + std::string(text) + "'");
}

double bbox_area(const BBox& b) { return b.w * b.h; }

double iou(const BBox& a, const BBox& b) {
  const double ix = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double iy = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  if (ix <= 0.0 || iy <= 0.0) return 0.0;
  const double inter = ix * iy;
  const double uni = bbox_area(a) + bbox_area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

BBox translated(const BBox& b, double dx, double dy) { return {b.x + dx, b.y + dy, b.w, b.h}; }

BBox scaled(const BBox& b, double factor) {
  return {b.x * factor, b.y * factor, b.w * factor, b.h * factor};
}

BBox clipped(const BBox& b, double width, double height) {
  const double x0 = std::clamp(b.x, 0.0, width);
  const double y0 = std::clamp(b.y, 0.0, height);
  const double x1 = std::clamp(b.x + b.w, 0.0, width);
  const double y1 = std::clamp(b.y + b.h, 0.0, height);
  return {x0, y0, x1 - x0, y1 - y0};
}

void validate(const Detection& d) {
  if (!d.bbox.valid()) {
    throw Error(ErrorCode::validation, "bbox of '" + d.image_id + "' has non-positive size");
  }
  if (!(d.score >= 0.0 && d.score <= 1.0)) {
    throw Error(ErrorCode::validation, "score of '" + d.image_id + "' outside [0,1]");
  }
}

ImageFrame::ImageFrame(std::string id, Camera cam, int w, int h, double t)
    : image_id(std::move(id)), camera(cam), width(w), height(h), timestamp(t) {
  if (w <= 0 || h <= 0) throw Error(ErrorCode::invalid_input, "frame dimensions must be positive");
  pixels.assign(pixel_count() * 3, 0);
}

ImageFrame::ImageFrame(std::string id, Camera cam, int w, int h, double t, std::vector<std::uint8_t> rgb)
    : image_id(std::move(id)), camera(cam), width(w), height(h), timestamp(t), pixels(std::move(rgb)) {
  if (w <= 0 || h <= 0) throw Error(ErrorCode::invalid_input, "frame dimensions must be positive");
  if (pixels.size() != pixel_count() * 3) {
    throw Error(ErrorCode::invalid_input, "pixel buffer length does not match width*height*3");
  }
}

namespace {
const std::array<DatasetDescriptor, 4> kPresets{{
    {"A", 60, Glare::normal, Ripeness::fully, 62},
    {"B1", 20, Glare::glare, Ripeness::fully, 68},
    {"B2", 30, Glare::normal, Ripeness::fully, 82},
    {"B3", 15, Glare::normal, Ripeness::half, 69},
}};
}  // namespace

std::span<const DatasetDescriptor> dataset_presets() { return kPresets; }

const DatasetDescriptor& dataset_preset(std::string_view name) {
  for (const auto& p : kPresets) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::config, "unknown dataset preset '" + std::string(name) + "'");
}

}  // namespace kiwi
