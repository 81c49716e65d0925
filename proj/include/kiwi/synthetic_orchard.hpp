#pragma once

// Seeded pergola-canopy scenes: flowers hang on a flat canopy plane above an
// upward-looking stereo rig and are rendered as yellow petal discs with a
// white stigma at the center. Ground-truth boxes bound the stigma disc only.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "kiwi/core.hpp"
#include "kiwi/stereo_locator.hpp"

namespace kiwi {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
};

struct SceneSpec {
  std::string name = "scene";     // image ids are <name>_L and <name>_R
  std::string dataset = "custom";
  double canopy_height_m = 1.0;
  // Sampling region on the canopy plane; zero means the left camera's footprint.
  double extent_length_m = 0.0;  // along camera y
  double extent_width_m = 0.0;   // along camera x
  double flower_count = 30.0;    // mean flowers per scene
  double flower_density = 0.0;   // flowers per m^2; overrides flower_count when > 0
  bool poisson_count = true;
  double flower_radius_m = 0.025;
  double stigma_ratio = 0.4;     // stigma radius / flower radius
  Rgb petal_color{235, 200, 40};
  Rgb stigma_color{252, 252, 246};
  Rgb background{30, 72, 32};
  int background_noise = 12;     // +- per channel
  double glare = 0.0;            // intensity in [0,1]; 0 disables
  double open_fraction = 1.0;    // probability a flower is fully open
  std::uint64_t seed = 0;
  double timestamp = 0.0;

  void validate() const;
};

// "A", "B1", "B2", "B3" mirror the evaluation dataset conditions.
SceneSpec scene_preset(std::string_view name);
// Preset name or "custom:<cfg>" with a [scene] section.
SceneSpec resolve_scene_preset(std::string_view spec);
SceneSpec load_scene_spec(const std::filesystem::path& path);

struct Flower {
  int id = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // camera frame
  double radius_m = 0.0;                               // rendered petal radius
  double stigma_radius_m = 0.0;
  bool open = true;
};

struct SceneTruth {
  SceneSpec spec;
  StereoRig rig;
  std::string left_id;
  std::string right_id;
  std::vector<Flower> flowers;
  std::vector<Detection> gt_left;
  std::vector<Detection> gt_right;
};

// Throws Error(generation) when the flowers cannot be placed at the minimum
// spacing within the retry budget.
SceneTruth generate_scene(const SceneSpec& spec, const StereoRig& rig);

// Truth for an explicit flower list (camera frame).
SceneTruth truth_from_flowers(const SceneSpec& spec, const StereoRig& rig, std::vector<Flower> flowers);

// Flowers for a drive: the left footprint extended by `lead_m` toward camera
// -y, which is ahead of an upward camera whose image top faces the direction
// of travel. The mean count keeps the footprint's density.
std::vector<Flower> generate_strip(const SceneSpec& spec, const StereoRig& rig, double lead_m);

// Pinhole projection; the right camera sits baseline_m along +x. Throws
// Error(behind_camera) when z <= 0.
Eigen::Vector2d project(const Eigen::Vector3d& point, const StereoRig& rig, Camera camera);

ImageFrame render_view(const SceneTruth& truth, Camera camera);

struct StereoRender {
  ImageFrame left;
  ImageFrame right;
  std::vector<Detection> gt_left;
  std::vector<Detection> gt_right;
};

StereoRender render_stereo(const SceneTruth& truth);

// Adds one to three seeded elliptical bright patches covering at most
// intensity * 25% of the frame.
ImageFrame apply_glare(ImageFrame frame, double intensity, std::uint64_t seed);

// Spec for image `index` of a generated dataset: per-image seed, name
// "<dataset>_<index>" and timestamp index * period.
SceneSpec scene_for_index(const SceneSpec& base, std::uint64_t seed, int index,
                          double period = kDefaultFramePeriod);

struct SynthOutputs {
  std::filesystem::path dir;
  int images = 0;
  std::size_t gt_left_boxes = 0;
  std::size_t gt_right_boxes = 0;
};

// Writes images/<id>.<ext>, gt_left.jsonl, gt_right.jsonl, manifest.csv,
// truth.jsonl and frames.csv (image_id,camera,timestamp,file).
SynthOutputs write_synth_dataset(const std::filesystem::path& dir, const SceneSpec& base, int n_images,
                                 std::uint64_t seed, const StereoRig& rig, std::string_view image_ext = ".ppm");

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace kiwi
