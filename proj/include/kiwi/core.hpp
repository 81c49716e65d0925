#pragma once

// Shared domain vocabulary: frames, boxes, detections, dataset descriptors,
// and the error type every module throws.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kiwi {

enum class ErrorCode {
  invalid_input,
  parse,
  validation,
  config,
  io,
  degenerate_geometry,
  behind_camera,
  target_unreachable,
  too_late,
  generation,
  shutdown,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

enum class Camera { left, right };

std::string_view to_string(Camera camera);
Camera camera_from_string(std::string_view text);

inline constexpr int kDefaultWidth = 1920;
inline constexpr int kDefaultHeight = 1080;
inline constexpr double kDefaultFramePeriod = 0.05;  // 20 Hz
inline constexpr std::string_view kFlowerLabel = "flower";

// Axis-aligned half-open rectangle [x, x+w) x [y, y+h) in continuous pixel
// coordinates; x grows right, y grows down.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double center_x() const { return x + 0.5 * w; }
  double center_y() const { return y + 0.5 * h; }
  bool valid() const { return w > 0.0 && h > 0.0; }
  bool within(double width, double height) const {
    return x >= 0.0 && y >= 0.0 && x + w <= width && y + h <= height;
  }

  bool operator==(const BBox&) const = default;
};

double bbox_area(const BBox& b);

// Intersection over union; 0 for disjoint boxes, symmetric in its arguments.
double iou(const BBox& a, const BBox& b);

BBox translated(const BBox& b, double dx, double dy);
BBox scaled(const BBox& b, double factor);

// Clips to [0,width]x[0,height]. The result may be degenerate when the box
// lies entirely outside.
BBox clipped(const BBox& b, double width, double height);

struct Detection {
  std::string image_id;
  Camera camera = Camera::left;
  BBox bbox;
  double score = 1.0;
  std::string label{kFlowerLabel};

  bool operator==(const Detection&) const = default;
};

// Throws Error(validation) when the bbox is degenerate or the score leaves [0,1].
void validate(const Detection& d);

// Row-major 8-bit RGB frame.
struct ImageFrame {
  std::string image_id;
  Camera camera = Camera::left;
  int width = 0;
  int height = 0;
  double timestamp = 0.0;
  std::vector<std::uint8_t> pixels;

  ImageFrame() = default;
  ImageFrame(std::string id, Camera cam, int w, int h, double t);
  ImageFrame(std::string id, Camera cam, int w, int h, double t, std::vector<std::uint8_t> rgb);

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
  std::uint8_t* at(int x, int y) { return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const std::uint8_t* at(int x, int y) const {
    return pixels.data() + 3 * (static_cast<std::size_t>(y) * width + x);
  }
};

enum class Glare { normal, glare };
enum class Ripeness { fully, half };

struct DatasetDescriptor {
  std::string name;
  double avg_flowers = 0.0;
  Glare glare = Glare::normal;
  Ripeness ripeness = Ripeness::fully;
  int n_images = 1;
};

// Evaluation groups A, B1, B2, B3 in that order.
std::span<const DatasetDescriptor> dataset_presets();
const DatasetDescriptor& dataset_preset(std::string_view name);

}  // namespace kiwi
