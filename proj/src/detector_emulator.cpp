#include "kiwi/detector_emulator.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "kiwi/config_file.hpp"
#include "kiwi/jsonl.hpp"

namespace kiwi {

void DetectorProfile::validate() const {
  if (!(precision_target > 0.0 && precision_target <= 1.0)) {
    throw Error(ErrorCode::config, "profile '" + name + "': precision_target must lie in (0,1]");
  }
  if (!(recall_target > 0.0 && recall_target <= 1.0)) {
    throw Error(ErrorCode::config, "profile '" + name + "': recall_target must lie in (0,1]");
  }
  if (!(latency_ms >= 0.0)) throw Error(ErrorCode::config, "profile '" + name + "': negative latency");
  if (!(center_jitter_sigma >= 0.0)) throw Error(ErrorCode::config, "profile '" + name + "': negative jitter");
  if (!(score_min >= 0.0 && score_min <= score_max && score_max <= 1.0)) {
    throw Error(ErrorCode::config, "profile '" + name + "': score range must satisfy 0 <= min <= max <= 1");
  }
}

const DetectorProfile& profile_nas() {
  static const DetectorProfile p{"nas", 0.968, 0.680, 1833.0};
  return p;
}

const DetectorProfile& profile_frcnn_iv2() {
  static const DetectorProfile p{"frcnn_iv2", 0.904, 0.758, 58.0};
  return p;
}

const DetectorProfile& profile_ssd_iv2() {
  static const DetectorProfile p{"ssd_iv2", 0.785, 0.612, 42.0};
  return p;
}

DetectorProfile load_profile(const std::filesystem::path& path) {
  const auto f = ConfigFile::load(path);
  DetectorProfile p;
  p.name = f.get_string("profile", "name", path.stem().string());
  p.precision_target = f.get_double("profile", "precision_target", p.precision_target);
  p.recall_target = f.get_double("profile", "recall_target", p.recall_target);
  p.latency_ms = f.get_double("profile", "latency_ms", p.latency_ms);
  p.center_jitter_sigma = f.get_double("profile", "center_jitter_sigma", p.center_jitter_sigma);
  auto scores = f.get_doubles("profile", "score_distribution", {p.score_min, p.score_max});
  if (scores.size() != 2) throw Error(ErrorCode::config, "score_distribution needs two values");
  p.score_min = scores[0];
  p.score_max = scores[1];
  p.validate();
  return p;
}

DetectorProfile resolve_profile(std::string_view spec) {
  if (spec == "nas") return profile_nas();
  if (spec == "frcnn_iv2") return profile_frcnn_iv2();
  if (spec == "ssd_iv2") return profile_ssd_iv2();
  if (spec.starts_with("file:")) return load_profile(std::filesystem::path(spec.substr(5)));
  throw Error(ErrorCode::config, "unknown detector profile '" + std::string(spec) + "'");
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct Indexed {
  std::uint64_t index;
  Detection detection;
};

}  // namespace

std::uint64_t record_key(std::uint64_t seed, std::string_view image_id, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ fnv1a(image_id)) + index);
}

std::vector<Detection> emulate_image(std::span<const Detection> gt, const DetectorProfile& profile,
                                     std::uint64_t seed, FrameSize frame) {
  profile.validate();
  if (gt.empty()) return {};
  const std::string& image_id = gt.front().image_id;
  const Camera camera = gt.front().camera;
  const double width = frame.width;
  const double height = frame.height;

  std::vector<double> widths, heights;
  for (const auto& g : gt) {
    if (g.image_id != image_id) throw Error(ErrorCode::invalid_input, "emulate_image: mixed image ids");
    validate(g);
    widths.push_back(g.bbox.w);
    heights.push_back(g.bbox.h);
  }

  std::vector<Detection> out;
  const std::uint64_t n_gt = gt.size();
  for (std::uint64_t i = 0; i < n_gt; ++i) {
    std::mt19937_64 rng(record_key(seed, image_id, i));
    std::bernoulli_distribution keep(profile.recall_target);
    if (!keep(rng)) continue;
    Detection d = gt[i];
    d.label = std::string(kFlowerLabel);
    if (profile.center_jitter_sigma > 0.0) {
      std::normal_distribution<double> jitter(0.0, profile.center_jitter_sigma);
      const double dx = jitter(rng);
      const double dy = jitter(rng);
      d.bbox.x = std::clamp(d.bbox.x + dx, 0.0, std::max(0.0, width - d.bbox.w));
      d.bbox.y = std::clamp(d.bbox.y + dy, 0.0, std::max(0.0, height - d.bbox.h));
    }
    std::uniform_real_distribution<double> score(profile.score_min, profile.score_max);
    d.score = profile.score_max > profile.score_min ? score(rng) : profile.score_min;
    out.push_back(std::move(d));
  }

  // False positives: Poisson with mean kept*(1-P)/P keeps expected precision at P.
  const double kept = static_cast<double>(out.size());
  const double fp_mean = kept * (1.0 - profile.precision_target) / profile.precision_target;
  std::uint64_t n_fp = 0;
  if (fp_mean > 0.0) {
    std::mt19937_64 rng(record_key(seed, image_id, n_gt));
    std::poisson_distribution<std::uint64_t> count(fp_mean);
    n_fp = count(rng);
  }
  const double box_w = std::min(median(widths), width);
  const double box_h = std::min(median(heights), height);
  for (std::uint64_t j = 0; j < n_fp; ++j) {
    std::mt19937_64 rng(record_key(seed, image_id, n_gt + 1 + j));
    std::uniform_real_distribution<double> ux(0.0, width - box_w);
    std::uniform_real_distribution<double> uy(0.0, height - box_h);
    Detection d;
    d.image_id = image_id;
    d.camera = camera;
    d.bbox = {ux(rng), uy(rng), box_w, box_h};
    std::uniform_real_distribution<double> score(profile.score_min, profile.score_max);
    d.score = profile.score_max > profile.score_min ? score(rng) : profile.score_min;
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<Detection> emulate(std::span<const Detection> gt, const DetectorProfile& profile, std::uint64_t seed,
                               FrameSize frame) {
  profile.validate();
  DetectionsByImage grouped = group_by_image(gt);
  std::vector<Detection> out;
  for (const auto& [id, boxes] : grouped) {
    auto part = emulate_image(boxes, profile, seed, frame);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

DetectionsByImage group_by_image(std::span<const Detection> detections) {
  DetectionsByImage out;
  for (const auto& d : detections) out[d.image_id].push_back(d);
  return out;
}

DetectionsByImage replay(const std::filesystem::path& path) { return group_by_image(read_detections(path)); }

std::vector<double> simulate_latency(const DetectorProfile& profile, std::span<const double> frame_timestamps) {
  std::vector<double> out;
  out.reserve(frame_timestamps.size());
  const double delay = profile.latency_ms / 1000.0;
  for (double t : frame_timestamps) out.push_back(t + delay);
  return out;
}

}  // namespace kiwi
