#include "kiwi/synthetic_orchard.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "json.hpp"
#include "kiwi/config_file.hpp"
#include "kiwi/image_io.hpp"
#include "kiwi/jsonl.hpp"

namespace kiwi {

namespace {

constexpr double kHalfOpenScale = 0.6;
constexpr double kHalfOpenValue = 0.7;
constexpr int kPlacementAttempts = 2000;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rgb dimmed(Rgb c, double factor) {
  auto f = [factor](std::uint8_t v) { return static_cast<std::uint8_t>(std::lround(v * factor)); };
  return {f(c.r), f(c.g), f(c.b)};
}

// Hard-edged disc: pixels whose centers lie within `radius` of (u, v).
void fill_disc(ImageFrame& frame, double u, double v, double radius, Rgb color) {
  const int y0 = std::max(0, static_cast<int>(std::ceil(v - radius - 0.5)));
  const int y1 = std::min(frame.height - 1, static_cast<int>(std::floor(v + radius - 0.5)));
  for (int y = y0; y <= y1; ++y) {
    const double dy = y + 0.5 - v;
    const double span2 = radius * radius - dy * dy;
    if (span2 < 0.0) continue;
    const double span = std::sqrt(span2);
    const int x0 = std::max(0, static_cast<int>(std::ceil(u - span - 0.5)));
    const int x1 = std::min(frame.width - 1, static_cast<int>(std::floor(u + span - 0.5)));
    for (int x = x0; x <= x1; ++x) {
      auto* p = frame.at(x, y);
      p[0] = color.r;
      p[1] = color.g;
      p[2] = color.b;
    }
  }
}

Rgb parse_rgb(const ConfigFile& f, std::string_view key, Rgb fallback) {
  auto v = f.get_doubles("scene", key, {double(fallback.r), double(fallback.g), double(fallback.b)});
  if (v.size() != 3) throw Error(ErrorCode::config, "[scene] " + std::string(key) + " needs three values");
  for (double c : v) {
    if (c < 0.0 || c > 255.0) throw Error(ErrorCode::config, "[scene] " + std::string(key) + " outside 0..255");
  }
  return {static_cast<std::uint8_t>(v[0]), static_cast<std::uint8_t>(v[1]), static_cast<std::uint8_t>(v[2])};
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) { return splitmix64(splitmix64(seed) ^ salt); }

void SceneSpec::validate() const {
  if (!(canopy_height_m > 0.0)) throw Error(ErrorCode::config, "canopy_height_m must be positive");
  if (!(flower_radius_m > 0.0)) throw Error(ErrorCode::config, "flower_radius_m must be positive");
  if (!(stigma_ratio > 0.0 && stigma_ratio <= 1.0)) throw Error(ErrorCode::config, "stigma_ratio must lie in (0,1]");
  if (!(flower_count >= 0.0) || !(flower_density >= 0.0)) throw Error(ErrorCode::config, "flower counts must be >= 0");
  if (!(extent_length_m >= 0.0 && extent_width_m >= 0.0)) throw Error(ErrorCode::config, "extent must be >= 0");
  if (!(glare >= 0.0 && glare <= 1.0)) throw Error(ErrorCode::config, "glare intensity must lie in [0,1]");
  if (!(open_fraction >= 0.0 && open_fraction <= 1.0)) throw Error(ErrorCode::config, "open_fraction must lie in [0,1]");
  if (background_noise < 0 || background_noise > 127) throw Error(ErrorCode::config, "background_noise out of range");
}

SceneSpec scene_preset(std::string_view name) {
  const auto& d = dataset_preset(name);
  SceneSpec s;
  s.dataset = d.name;
  s.name = d.name;
  s.flower_count = d.avg_flowers;
  if (d.name == "A") s.canopy_height_m = 1.6;  // farther from the canopy, smaller flowers
  if (d.glare == Glare::glare) s.glare = 0.6;
  if (d.ripeness == Ripeness::half) s.open_fraction = 0.5;
  return s;
}

SceneSpec load_scene_spec(const std::filesystem::path& path) {
  const auto f = ConfigFile::load(path);
  SceneSpec s = f.has("scene", "preset") ? scene_preset(f.get_string("scene", "preset", "B2")) : SceneSpec{};
  s.dataset = f.get_string("scene", "dataset", s.dataset == "custom" ? path.stem().string() : s.dataset);
  s.name = s.dataset;
  s.canopy_height_m = f.get_double("scene", "canopy_height_m", s.canopy_height_m);
  auto extent = f.get_doubles("scene", "extent_m", {s.extent_length_m, s.extent_width_m});
  if (extent.size() != 2) throw Error(ErrorCode::config, "[scene] extent_m needs two values");
  s.extent_length_m = extent[0];
  s.extent_width_m = extent[1];
  s.flower_count = f.get_double("scene", "flower_count", s.flower_count);
  s.flower_density = f.get_double("scene", "flower_density", s.flower_density);
  s.poisson_count = f.get_bool("scene", "poisson_count", s.poisson_count);
  s.flower_radius_m = f.get_double("scene", "flower_radius_m", s.flower_radius_m);
  s.stigma_ratio = f.get_double("scene", "stigma_ratio", s.stigma_ratio);
  s.petal_color = parse_rgb(f, "petal_color", s.petal_color);
  s.stigma_color = parse_rgb(f, "stigma_color", s.stigma_color);
  s.background = parse_rgb(f, "background", s.background);
  s.background_noise = static_cast<int>(f.get_int("scene", "background_noise", s.background_noise));
  s.glare = f.get_double("scene", "glare", s.glare);
  s.open_fraction = f.get_double("scene", "open_fraction", s.open_fraction);
  s.validate();
  return s;
}

SceneSpec resolve_scene_preset(std::string_view spec) {
  if (spec.starts_with("custom:")) return load_scene_spec(std::filesystem::path(spec.substr(7)));
  return scene_preset(spec);
}

Eigen::Vector2d project(const Eigen::Vector3d& point, const StereoRig& rig, Camera camera) {
  if (!(point.z() > 0.0)) throw Error(ErrorCode::behind_camera, "cannot project a point with z <= 0");
  const double x = camera == Camera::left ? point.x() : point.x() - rig.baseline_m;
  return {rig.cx + rig.focal_px * x / point.z(), rig.cy + rig.focal_px * point.y() / point.z()};
}

namespace {

struct Region {
  double x_lo, x_hi, y_lo, y_hi;
  double area() const { return (x_hi - x_lo) * (y_hi - y_lo); }
};

Region footprint(const SceneSpec& spec, const StereoRig& rig) {
  const double z = spec.canopy_height_m;
  if (spec.extent_length_m > 0.0 && spec.extent_width_m > 0.0) {
    return {-0.5 * spec.extent_width_m, 0.5 * spec.extent_width_m, -0.5 * spec.extent_length_m,
            0.5 * spec.extent_length_m};
  }
  return {-rig.cx * z / rig.focal_px, (rig.width - rig.cx) * z / rig.focal_px, -rig.cy * z / rig.focal_px,
          (rig.height - rig.cy) * z / rig.focal_px};
}

std::vector<Flower> sample_flowers(const SceneSpec& spec, const Region& region, double mean) {
  std::mt19937_64 rng(mix_seed(spec.seed, 0x5ce7e));
  std::size_t count = 0;
  if (spec.poisson_count && mean > 0.0) {
    count = std::poisson_distribution<std::size_t>(mean)(rng);
  } else {
    count = static_cast<std::size_t>(std::llround(mean));
  }

  std::vector<Flower> flowers;
  std::uniform_real_distribution<double> ux(region.x_lo, region.x_hi);
  std::uniform_real_distribution<double> uy(region.y_lo, region.y_hi);
  std::bernoulli_distribution open(spec.open_fraction);
  const double min_gap = 2.0 * spec.flower_radius_m;
  for (std::size_t i = 0; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
      const Eigen::Vector3d p(ux(rng), uy(rng), spec.canopy_height_m);
      placed = std::all_of(flowers.begin(), flowers.end(),
                           [&](const Flower& f) { return (f.position - p).norm() >= min_gap; });
      if (placed) {
        Flower f;
        f.id = static_cast<int>(i);
        f.position = p;
        f.open = open(rng);
        const double scale = f.open ? 1.0 : kHalfOpenScale;
        f.radius_m = spec.flower_radius_m * scale;
        f.stigma_radius_m = spec.flower_radius_m * spec.stigma_ratio * scale;
        flowers.push_back(f);
      }
    }
    if (!placed) {
      throw Error(ErrorCode::generation, "cannot place flower " + std::to_string(i) + " of " + std::to_string(count) +
                                             " at minimum spacing " + std::to_string(min_gap) + " m");
    }
  }
  return flowers;
}

}  // namespace

SceneTruth truth_from_flowers(const SceneSpec& spec, const StereoRig& rig, std::vector<Flower> flowers) {
  spec.validate();
  rig.validate();
  SceneTruth truth;
  truth.spec = spec;
  truth.rig = rig;
  truth.left_id = spec.name + "_L";
  truth.right_id = spec.name + "_R";
  truth.flowers = std::move(flowers);

  for (Camera cam : {Camera::left, Camera::right}) {
    auto& gt = cam == Camera::left ? truth.gt_left : truth.gt_right;
    const std::string& id = cam == Camera::left ? truth.left_id : truth.right_id;
    for (const auto& f : truth.flowers) {
      const auto c = project(f.position, rig, cam);
      if (c.x() < 0.0 || c.x() >= rig.width || c.y() < 0.0 || c.y() >= rig.height) continue;
      const double rho = rig.focal_px * f.stigma_radius_m / f.position.z();
      Detection d;
      d.image_id = id;
      d.camera = cam;
      d.bbox = clipped({c.x() - rho, c.y() - rho, 2.0 * rho, 2.0 * rho}, rig.width, rig.height);
      d.score = 1.0;
      gt.push_back(std::move(d));
    }
  }
  return truth;
}

SceneTruth generate_scene(const SceneSpec& spec, const StereoRig& rig) {
  spec.validate();
  rig.validate();
  const Region region = footprint(spec, rig);
  const double mean = spec.flower_density > 0.0 ? spec.flower_density * region.area() : spec.flower_count;
  return truth_from_flowers(spec, rig, sample_flowers(spec, region, mean));
}

std::vector<Flower> generate_strip(const SceneSpec& spec, const StereoRig& rig, double lead_m) {
  spec.validate();
  rig.validate();
  if (!(lead_m >= 0.0)) throw Error(ErrorCode::invalid_input, "strip lead must be >= 0");
  Region region = footprint(spec, rig);
  const double density = spec.flower_density > 0.0 ? spec.flower_density : spec.flower_count / region.area();
  region.y_lo -= lead_m;
  return sample_flowers(spec, region, density * region.area());
}

ImageFrame render_view(const SceneTruth& truth, Camera camera) {
  const auto& spec = truth.spec;
  const auto& rig = truth.rig;
  ImageFrame frame(camera == Camera::left ? truth.left_id : truth.right_id, camera, rig.width, rig.height,
                   spec.timestamp);

  // Background: dark green with per-pixel hashed noise.
  const int amp = spec.background_noise;
  const int span = 2 * amp + 1;
  const std::uint64_t key = mix_seed(spec.seed, camera == Camera::left ? 0xb0a : 0xb0b);
  std::uint8_t* px = frame.pixels.data();
  const std::size_t n = frame.pixel_count();
  auto channel = [span, amp](int base, std::uint64_t bits) {
    return static_cast<std::uint8_t>(std::clamp(base + static_cast<int>(bits % static_cast<std::uint64_t>(span)) - amp, 0, 255));
  };
  for (std::size_t i = 0; i < n; ++i, px += 3) {
    const std::uint64_t h = splitmix64(key + i);
    px[0] = channel(spec.background.r, h & 0xffff);
    px[1] = channel(spec.background.g, (h >> 16) & 0xffff);
    px[2] = channel(spec.background.b, (h >> 32) & 0xffff);
  }

  for (const auto& f : truth.flowers) {
    const auto c = project(f.position, rig, camera);
    const double petal = rig.focal_px * f.radius_m / f.position.z();
    const double stigma = rig.focal_px * f.stigma_radius_m / f.position.z();
    if (c.x() + petal < 0.0 || c.x() - petal > rig.width || c.y() + petal < 0.0 || c.y() - petal > rig.height) continue;
    const double value = f.open ? 1.0 : kHalfOpenValue;
    fill_disc(frame, c.x(), c.y(), petal, dimmed(spec.petal_color, value));
    fill_disc(frame, c.x(), c.y(), stigma, dimmed(spec.stigma_color, value));
  }

  if (spec.glare > 0.0) {
    frame = apply_glare(std::move(frame), spec.glare, mix_seed(spec.seed, camera == Camera::left ? 0x91a : 0x91b));
  }
  return frame;
}

StereoRender render_stereo(const SceneTruth& truth) {
  return {render_view(truth, Camera::left), render_view(truth, Camera::right), truth.gt_left, truth.gt_right};
}

ImageFrame apply_glare(ImageFrame frame, double intensity, std::uint64_t seed) {
  if (!(intensity > 0.0)) return frame;
  intensity = std::min(intensity, 1.0);
  std::mt19937_64 rng(mix_seed(seed, 0x61a2e));
  const int patches = std::uniform_int_distribution<int>(1, 3)(rng);
  const double frame_area = static_cast<double>(frame.width) * frame.height;
  const double budget = intensity * 0.25 * frame_area * std::uniform_real_distribution<double>(0.6, 1.0)(rng);

  for (int k = 0; k < patches; ++k) {
    const double area = budget / patches;
    const double aspect = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
    const double a = std::sqrt(area * aspect / std::numbers::pi);
    const double b = area / (std::numbers::pi * a);
    const double cu = std::uniform_real_distribution<double>(0.0, frame.width)(rng);
    const double cv = std::uniform_real_distribution<double>(0.0, frame.height)(rng);
    const double theta = std::uniform_real_distribution<double>(0.0, std::numbers::pi)(rng);
    const double ct = std::cos(theta), st = std::sin(theta);
    const double reach = std::max(a, b);
    const int y0 = std::max(0, static_cast<int>(cv - reach));
    const int y1 = std::min(frame.height - 1, static_cast<int>(cv + reach) + 1);
    const int x0 = std::max(0, static_cast<int>(cu - reach));
    const int x1 = std::min(frame.width - 1, static_cast<int>(cu + reach) + 1);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double du = x + 0.5 - cu, dv = y + 0.5 - cv;
        const double p = (du * ct + dv * st) / a;
        const double q = (-du * st + dv * ct) / b;
        const double rho2 = p * p + q * q;
        if (rho2 > 1.0) continue;
        // Saturated white core fading out toward the rim.
        const double alpha = std::min(1.0, 1.5 * (1.0 - rho2));
        auto* px = frame.at(x, y);
        for (int ch = 0; ch < 3; ++ch) {
          px[ch] = static_cast<std::uint8_t>(std::lround(px[ch] + alpha * (255.0 - px[ch])));
        }
      }
    }
  }
  return frame;
}

SceneSpec scene_for_index(const SceneSpec& base, std::uint64_t seed, int index, double period) {
  SceneSpec s = base;
  s.seed = mix_seed(seed, static_cast<std::uint64_t>(index));
  char suffix[16];
  std::snprintf(suffix, sizeof suffix, "_%04d", index);
  s.name = base.dataset + suffix;
  s.timestamp = index * period;
  return s;
}

SynthOutputs write_synth_dataset(const std::filesystem::path& dir, const SceneSpec& base, int n_images,
                                 std::uint64_t seed, const StereoRig& rig, std::string_view image_ext) {
  if (n_images < 0) throw Error(ErrorCode::invalid_input, "image count must be non-negative");
  std::filesystem::create_directories(dir / "images");
  std::string gt_left, gt_right, truth_lines, frames = "image_id,camera,timestamp,file\n";
  Manifest manifest;
  SynthOutputs out{dir, n_images, 0, 0};

  for (int i = 0; i < n_images; ++i) {
    const auto truth = generate_scene(scene_for_index(base, seed, i), rig);
    for (Camera cam : {Camera::left, Camera::right}) {
      const ImageFrame frame = render_view(truth, cam);
      const std::string file = "images/" + frame.image_id + std::string(image_ext);
      write_image(dir / file, frame);
      char ts[32];
      std::snprintf(ts, sizeof ts, "%.6f", frame.timestamp);
      frames += frame.image_id + "," + std::string(to_string(cam)) + "," + ts + "," + file + "\n";
      manifest.emplace_back(frame.image_id, base.dataset);
    }
    for (const auto& d : truth.gt_left) gt_left += to_jsonl(d, true) + "\n";
    for (const auto& d : truth.gt_right) gt_right += to_jsonl(d, true) + "\n";
    out.gt_left_boxes += truth.gt_left.size();
    out.gt_right_boxes += truth.gt_right.size();
    for (const auto& f : truth.flowers) {
      nlohmann::ordered_json j;
      j["scene"] = truth.spec.name;
      j["flower_id"] = f.id;
      j["xyz"] = {f.position.x(), f.position.y(), f.position.z()};
      j["radius"] = f.radius_m;
      j["stigma_radius"] = f.stigma_radius_m;
      j["open"] = f.open;
      truth_lines += j.dump() + "\n";
    }
  }
  write_text_file(dir / "gt_left.jsonl", gt_left);
  write_text_file(dir / "gt_right.jsonl", gt_right);
  write_text_file(dir / "truth.jsonl", truth_lines);
  write_text_file(dir / "frames.csv", frames);
  write_manifest(dir / "manifest.csv", manifest);
  return out;
}

}  // namespace kiwi
