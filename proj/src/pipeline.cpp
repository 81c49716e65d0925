#include "kiwi/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "kiwi/config_file.hpp"
#include "kiwi/image_io.hpp"
#include "kiwi/jsonl.hpp"

namespace kiwi {

using Clock = std::chrono::steady_clock;
using nlohmann::ordered_json;

namespace {

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

std::filesystem::path resolve_against(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

ordered_json detection_json(const Detection& d) {
  ordered_json j;
  j["image_id"] = d.image_id;
  j["camera"] = std::string(to_string(d.camera));
  j["bbox"] = {d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h};
  j["score"] = d.score;
  j["label"] = d.label;
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

double DetectorSource::latency_s() const { return kind == SourceKind::emulate ? profile.latency_ms / 1000.0 : 0.0; }

DetectorSource parse_detector_source(std::string_view spec, const std::filesystem::path& base_dir) {
  DetectorSource src;
  src.spec = std::string(spec);
  const auto colon = spec.find(':');
  const std::string_view kind = spec.substr(0, colon);
  const std::string_view arg = colon == std::string_view::npos ? std::string_view{} : spec.substr(colon + 1);
  if (kind == "classical") {
    src.kind = SourceKind::classical;
    if (!arg.empty()) src.classical = load_detector_config(resolve_against(base_dir, std::string(arg)));
    src.classical.validate();
  } else if (kind == "emulate") {
    src.kind = SourceKind::emulate;
    if (arg.empty()) throw Error(ErrorCode::config, "emulate source needs a profile: emulate:<profile>[,<seed>]");
    const auto comma = arg.rfind(',');
    std::string profile(arg.substr(0, comma));
    if (comma != std::string_view::npos) {
      const std::string seed(arg.substr(comma + 1));
      try {
        std::size_t used = 0;
        src.seed = std::stoull(seed, &used);
        if (used != seed.size()) throw std::invalid_argument(seed);
      } catch (const std::exception&) {
        throw Error(ErrorCode::config, "bad emulator seed '" + seed + "'");
      }
    }
    if (profile.starts_with("file:")) profile = "file:" + resolve_against(base_dir, profile.substr(5)).string();
    src.profile = resolve_profile(profile);
  } else if (kind == "file") {
    src.kind = SourceKind::file;
    if (arg.empty()) throw Error(ErrorCode::config, "file source needs a path: file:<detections.jsonl>");
    src.replay = std::make_shared<const DetectionsByImage>(replay(resolve_against(base_dir, std::string(arg))));
  } else {
    throw Error(ErrorCode::config, "unknown detector source '" + std::string(spec) + "'");
  }
  return src;
}

void PipelineConfig::validate() const {
  if (workers < 1) throw Error(ErrorCode::config, "workers must be >= 1");
  if (!(score_min >= 0.0 && score_min <= 1.0)) throw Error(ErrorCode::config, "score_min must lie in [0,1]");
  if (!(dedupe_radius_m >= 0.0)) throw Error(ErrorCode::config, "dedupe_radius_m must be >= 0");
  if (!(dedupe_expiry_m >= 0.0)) throw Error(ErrorCode::config, "dedupe_expiry_m must be >= 0");
  if (!(pair_tolerance_s >= 0.0)) throw Error(ErrorCode::config, "pair_tolerance_s must be >= 0");
  if (synth_frames < 0) throw Error(ErrorCode::config, "synth frames must be >= 0");
  vehicle.validate();
  log.validate();
  for (const auto* p : {&rig_path, &extrinsic_path, &nozzle_path}) {
    if (!p->empty() && !std::filesystem::exists(*p)) {
      throw Error(ErrorCode::config, "referenced file does not exist: " + p->string());
    }
  }
}

namespace {

PipelineConfig from_config(const ConfigFile& f, const std::filesystem::path& base_dir) {
  PipelineConfig cfg;
  cfg.base_dir = base_dir;
  cfg.detector = f.get_string("pipeline", "detector", cfg.detector);
  auto path = [&](std::string_view key) {
    auto v = f.find("pipeline", key);
    return v ? f.resolve(*v) : std::filesystem::path{};
  };
  cfg.rig_path = path("rig");
  cfg.extrinsic_path = path("extrinsic");
  cfg.nozzle_path = path("nozzles");
  if (auto v = f.find("pipeline", "vehicle")) cfg.vehicle = parse_vehicle_state(*v);
  cfg.score_min = f.get_double("pipeline", "score_min", cfg.score_min);
  cfg.dedupe_radius_m = f.get_double("pipeline", "dedupe_radius_m", cfg.dedupe_radius_m);
  cfg.dedupe_expiry_m = f.get_double("pipeline", "dedupe_expiry_m", cfg.dedupe_expiry_m);
  cfg.pair_tolerance_s = f.get_double("pipeline", "pair_tolerance_s", cfg.pair_tolerance_s);
  cfg.workers = static_cast<int>(f.get_int("pipeline", "workers", cfg.workers));
  cfg.realtime_latency = f.get_bool("pipeline", "realtime_latency", cfg.realtime_latency);

  auto& log = cfg.log;
  log.enabled = f.get_bool("log", "enabled", log.enabled);
  if (auto v = f.find("log", "out_dir")) log.out_dir = f.resolve(*v);
  const auto capacity = f.get_int("log", "queue_capacity", static_cast<long long>(log.queue_capacity));
  if (capacity < 1) throw Error(ErrorCode::config, "[log] queue_capacity must be >= 1");
  log.queue_capacity = static_cast<std::size_t>(capacity);
  log.drop_policy = drop_policy_from_string(f.get_string("log", "drop_policy", std::string(to_string(log.drop_policy))));
  log.save_images = f.get_bool("log", "save_images", log.save_images);
  const auto max_bytes = f.get_int("log", "max_record_bytes", static_cast<long long>(log.max_record_bytes));
  if (max_bytes < 1) throw Error(ErrorCode::config, "[log] max_record_bytes must be >= 1");
  log.max_record_bytes = static_cast<std::size_t>(max_bytes);

  const auto seed = f.get_int("synth", "seed", static_cast<long long>(cfg.synth_seed));
  if (seed < 0) throw Error(ErrorCode::config, "[synth] seed must be >= 0");
  cfg.synth_seed = static_cast<std::uint64_t>(seed);
  cfg.synth_frames = static_cast<int>(f.get_int("synth", "frames", cfg.synth_frames));
  cfg.bench_preset = f.get_string("synth", "bench_preset", cfg.bench_preset);
  cfg.validate();
  return cfg;
}

}  // namespace

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return from_config(ConfigFile::load(path), path.parent_path());
}

PipelineConfig parse_pipeline_config(std::string_view text, const std::filesystem::path& base_dir) {
  return from_config(ConfigFile::parse(text, base_dir), base_dir);
}

void apply_env_overrides(PipelineConfig& cfg) {
  if (const char* w = std::getenv("KIWI_WORKERS"); w != nullptr && *w != '\0') {
    char* end = nullptr;
    const long v = std::strtol(w, &end, 10);
    if (*end != '\0' || v < 1 || v > 1024) throw Error(ErrorCode::config, "KIWI_WORKERS must be an integer >= 1");
    cfg.workers = static_cast<int>(v);
  }
  if (const char* d = std::getenv("KIWI_LOG_DIR"); d != nullptr && *d != '\0') cfg.log.out_dir = d;
}

PipelineSetup resolve_setup(const PipelineConfig& cfg) {
  cfg.validate();
  PipelineSetup setup;
  setup.extrinsic = RigidTransform::upward_camera();
  if (!cfg.rig_path.empty()) {
    const auto rc = load_rig_config(cfg.rig_path);
    setup.rig = rc.rig;
    if (rc.has_extrinsic) setup.extrinsic = rc.extrinsic;
  }
  if (!cfg.extrinsic_path.empty()) {
    const auto rc = load_rig_config(cfg.extrinsic_path);
    if (!rc.has_extrinsic) {
      throw Error(ErrorCode::config, "no [extrinsic] section in " + cfg.extrinsic_path.string());
    }
    setup.extrinsic = rc.extrinsic;
  }
  setup.rig.validate();
  setup.extrinsic.validate();
  if (!cfg.nozzle_path.empty()) setup.nozzles = load_nozzle_config(cfg.nozzle_path);
  setup.nozzles.validate();
  setup.source = parse_detector_source(cfg.detector, cfg.base_dir);
  return setup;
}

// ---------------------------------------------------------------------------
// Frame sources

std::vector<FrameRef> load_frame_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::io, "not a directory: " + dir.string());

  std::map<std::string, std::vector<Detection>, std::less<>> gt;
  for (const char* name : {"gt_left.jsonl", "gt_right.jsonl"}) {
    if (std::filesystem::exists(dir / name)) {
      for (auto& d : read_detections(dir / name)) gt[d.image_id].push_back(std::move(d));
    }
  }

  auto make_ref = [&](std::string id, Camera cam, double t, std::filesystem::path file) {
    FrameRef ref;
    ref.image_id = id;
    ref.camera = cam;
    ref.timestamp = t;
    if (auto it = gt.find(id); it != gt.end()) ref.gt = it->second;
    ref.load = [file = std::move(file), id = std::move(id), cam, t]() {
      auto frame = read_image(file, cam, t);
      frame.image_id = id;
      return std::make_shared<const ImageFrame>(std::move(frame));
    };
    return ref;
  };

  std::vector<FrameRef> frames;
  const auto csv = dir / "frames.csv";
  if (std::filesystem::exists(csv)) {
    std::istringstream in(read_text_file(csv));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || (line_no == 1 && line.starts_with("image_id"))) continue;
      std::vector<std::string> cols;
      std::stringstream ls(line);
      std::string col;
      while (std::getline(ls, col, ',')) cols.push_back(col);
      if (cols.size() != 4) {
        throw Error(ErrorCode::parse, "frames.csv line " + std::to_string(line_no) + ": expected 4 columns");
      }
      double t = 0.0;
      try {
        t = std::stod(cols[2]);
      } catch (const std::exception&) {
        throw Error(ErrorCode::parse, "frames.csv line " + std::to_string(line_no) + ": bad timestamp");
      }
      frames.push_back(make_ref(cols[0], camera_from_string(cols[1]), t, dir / cols[3]));
    }
    return frames;
  }

  // Name-based pairing: <base>_L.<ext> / <base>_R.<ext>.
  std::map<std::string, std::map<Camera, std::filesystem::path>> by_base;
  for (const auto& root : {dir, dir / "images"}) {
    if (!std::filesystem::is_directory(root)) continue;
    for (const auto& entry : std::filesystem::directory_iterator(root)) {
      const auto ext = entry.path().extension().string();
      if (ext != ".ppm" && ext != ".png") continue;
      const std::string stem = entry.path().stem().string();
      if (stem.size() < 3 || stem[stem.size() - 2] != '_') continue;
      const char c = stem.back();
      if (c != 'L' && c != 'R') continue;
      by_base[stem.substr(0, stem.size() - 2)][c == 'L' ? Camera::left : Camera::right] = entry.path();
    }
  }
  std::size_t index = 0;
  for (const auto& [base, files] : by_base) {
    const double t = static_cast<double>(index++) * kDefaultFramePeriod;
    for (const auto& [cam, file] : files) frames.push_back(make_ref(file.stem().string(), cam, t, file));
  }
  return frames;
}

SynthDrive synth_drive(const SceneSpec& spec, const StereoRig& rig, const VehicleState& vehicle, int n_pairs,
                       std::uint64_t seed, double period) {
  if (n_pairs < 0) throw Error(ErrorCode::invalid_input, "pair count must be >= 0");
  SynthDrive drive;
  if (n_pairs == 0) return drive;
  SceneSpec strip_spec = spec;
  strip_spec.seed = seed;
  const double t_first = 0.0;
  const double t_last = (n_pairs - 1) * period;
  const double travel = vehicle.distance_at(t_last) - vehicle.distance_at(t_first);
  drive.flowers = generate_strip(strip_spec, rig, travel + 4.0 * spec.flower_radius_m);

  for (int i = 0; i < n_pairs; ++i) {
    const double t = i * period;
    const double moved = vehicle.distance_at(t) - vehicle.distance_at(t_first);
    std::vector<Flower> visible;
    for (Flower f : drive.flowers) {
      // Forward motion carries the canopy toward camera +y.
      f.position.y() += moved;
      const double pad = rig.focal_px * f.radius_m / f.position.z() + 1.0;
      const double v = rig.cy + rig.focal_px * f.position.y() / f.position.z();
      if (v < -pad || v > rig.height + pad) continue;
      visible.push_back(f);
    }
    SceneSpec frame_spec = scene_for_index(spec, seed, i, period);
    frame_spec.name = spec.dataset + "_drive_" + std::to_string(i);
    auto truth = std::make_shared<const SceneTruth>(truth_from_flowers(frame_spec, rig, std::move(visible)));
    for (Camera cam : {Camera::left, Camera::right}) {
      FrameRef ref;
      ref.image_id = cam == Camera::left ? truth->left_id : truth->right_id;
      ref.camera = cam;
      ref.timestamp = t;
      ref.gt = cam == Camera::left ? truth->gt_left : truth->gt_right;
      ref.load = [truth, cam]() { return std::make_shared<const ImageFrame>(render_view(*truth, cam)); };
      drive.frames.push_back(std::move(ref));
    }
  }
  return drive;
}

// ---------------------------------------------------------------------------
// Stats

LatencySummary summarize(std::vector<double> samples) {
  LatencySummary s;
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  auto rank = [&](double q) {
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size())));
    return samples[std::clamp<std::size_t>(k, 1, samples.size()) - 1];
  };
  s.p50 = rank(0.50);
  s.p90 = rank(0.90);
  s.p99 = rank(0.99);
  s.max = samples.back();
  return s;
}

std::string format_stats_text(const PipelineStats& s) {
  char buf[2048];
  auto row = [](const char* name, const LatencySummary& l) {
    char line[160];
    std::snprintf(line, sizeof line, "  %-12s p50 %8.2f  p90 %8.2f  p99 %8.2f  max %8.2f ms\n", name, l.p50, l.p90,
                  l.p99, l.max);
    return std::string(line);
  };
  std::snprintf(buf, sizeof buf,
                "pipeline run\n"
                "  frames in        %zu\n"
                "  stereo pairs     %zu (processed %zu, skipped %zu)\n"
                "  unpaired frames  %zu\n"
                "  detections       %zu\n"
                "  stereo matches   %zu\n"
                "  targets          %zu (duplicates %zu)\n"
                "  spray commands   %zu (misses %zu)\n"
                "  workers          %d\n"
                "  wall time        %.3f s\n"
                "  throughput       %.2f pairs/s\n"
                "stage latency\n",
                s.frames_in, s.pairs, s.pairs_processed, s.pairs_skipped, s.frames_unpaired, s.detections, s.matches,
                s.targets, s.duplicates, s.commands, s.misses, s.workers, s.wall_s, s.throughput_fps);
  std::string out = buf;
  out += row("load", s.load_ms);
  out += row("detect", s.detect_ms);
  out += row("stereo", s.stereo_ms);
  out += row("schedule", s.schedule_ms);
  out += row("end-to-end", s.end_to_end_ms);
  if (s.logger) {
    std::snprintf(buf, sizeof buf, "logger\n  offered %llu accepted %llu dropped %llu persisted %llu failed %llu\n",
                  static_cast<unsigned long long>(s.logger->offered), static_cast<unsigned long long>(s.logger->accepted),
                  static_cast<unsigned long long>(s.logger->dropped),
                  static_cast<unsigned long long>(s.logger->persisted),
                  static_cast<unsigned long long>(s.logger->failed));
    out += buf;
  }
  return out;
}

std::string format_stats_kv(const PipelineStats& s) {
  std::ostringstream out;
  out.precision(6);
  out << std::fixed;
  out << "frames_in=" << s.frames_in << "\n"
      << "pairs=" << s.pairs << "\n"
      << "pairs_processed=" << s.pairs_processed << "\n"
      << "pairs_skipped=" << s.pairs_skipped << "\n"
      << "frames_unpaired=" << s.frames_unpaired << "\n"
      << "detections=" << s.detections << "\n"
      << "matches=" << s.matches << "\n"
      << "targets=" << s.targets << "\n"
      << "duplicates=" << s.duplicates << "\n"
      << "commands=" << s.commands << "\n"
      << "misses=" << s.misses << "\n"
      << "workers=" << s.workers << "\n"
      << "wall_s=" << s.wall_s << "\n"
      << "throughput_fps=" << s.throughput_fps << "\n";
  auto stage = [&](const char* name, const LatencySummary& l) {
    out << name << "_p50_ms=" << l.p50 << "\n"
        << name << "_p90_ms=" << l.p90 << "\n"
        << name << "_p99_ms=" << l.p99 << "\n"
        << name << "_max_ms=" << l.max << "\n";
  };
  stage("load", s.load_ms);
  stage("detect", s.detect_ms);
  stage("stereo", s.stereo_ms);
  stage("schedule", s.schedule_ms);
  stage("end_to_end", s.end_to_end_ms);
  if (s.logger) {
    out << "log_offered=" << s.logger->offered << "\n"
        << "log_accepted=" << s.logger->accepted << "\n"
        << "log_dropped=" << s.logger->dropped << "\n"
        << "log_persisted=" << s.logger->persisted << "\n"
        << "log_failed=" << s.logger->failed << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Run

namespace {

struct PairJob {
  const FrameRef* left = nullptr;
  const FrameRef* right = nullptr;
  double timestamp = 0.0;
};

struct PairOutput {
  std::string error;
  std::shared_ptr<const ImageFrame> left_image;
  std::shared_ptr<const ImageFrame> right_image;
  std::vector<Detection> left;
  std::vector<Detection> right;
  std::size_t matches = 0;
  std::vector<FlowerTarget> targets;  // vehicle frame at capture
  double load_ms = 0.0;
  double detect_ms = 0.0;
  double stereo_ms = 0.0;
  Clock::time_point started;
};

struct Pairing {
  std::vector<PairJob> pairs;
  std::vector<const FrameRef*> unpaired;
};

Pairing pair_frames(std::span<const FrameRef> frames, double tolerance) {
  std::vector<const FrameRef*> left, right;
  for (const auto& f : frames) (f.camera == Camera::left ? left : right).push_back(&f);
  auto order = [](const FrameRef* a, const FrameRef* b) {
    if (a->timestamp != b->timestamp) return a->timestamp < b->timestamp;
    return a->image_id < b->image_id;
  };
  std::sort(left.begin(), left.end(), order);
  std::sort(right.begin(), right.end(), order);

  Pairing out;
  std::size_t i = 0, j = 0;
  while (i < left.size() && j < right.size()) {
    const double dt = left[i]->timestamp - right[j]->timestamp;
    if (std::abs(dt) <= tolerance) {
      out.pairs.push_back({left[i], right[j], left[i]->timestamp});
      ++i;
      ++j;
    } else if (dt < 0.0) {
      out.unpaired.push_back(left[i++]);
    } else {
      out.unpaired.push_back(right[j++]);
    }
  }
  for (; i < left.size(); ++i) out.unpaired.push_back(left[i]);
  for (; j < right.size(); ++j) out.unpaired.push_back(right[j]);
  std::sort(out.unpaired.begin(), out.unpaired.end(), order);
  return out;
}

std::shared_ptr<const ImageFrame> load_view(const FrameRef& ref, const PipelineSetup& setup, bool want_image) {
  if (setup.source.kind != SourceKind::classical && !want_image) return nullptr;
  if (!ref.load) {
    if (setup.source.kind != SourceKind::classical) return nullptr;
    throw Error(ErrorCode::invalid_input, "no image for frame " + ref.image_id);
  }
  return ref.load();
}

std::vector<Detection> detect_view(const FrameRef& ref, const PipelineSetup& setup, const ImageFrame* image) {
  const auto& src = setup.source;
  std::vector<Detection> dets;
  switch (src.kind) {
    case SourceKind::classical:
      dets = detect_stigmas(*image, src.classical);
      break;
    case SourceKind::emulate:
      dets = emulate_image(ref.gt, src.profile, src.seed, FrameSize{setup.rig.width, setup.rig.height});
      break;
    case SourceKind::file:
      if (auto it = src.replay->find(ref.image_id); it != src.replay->end()) dets = it->second;
      break;
  }
  for (auto& d : dets) {
    d.image_id = ref.image_id;
    d.camera = ref.camera;
  }
  return dets;
}

PairOutput process_pair(const PairJob& job, const PipelineSetup& setup, const PipelineConfig& cfg) {
  PairOutput out;
  out.started = Clock::now();
  try {
    const bool want_image = cfg.log.enabled && cfg.log.save_images;
    out.left_image = load_view(*job.left, setup, want_image);
    out.right_image = load_view(*job.right, setup, want_image);
    const auto t0 = Clock::now();
    out.load_ms = ms_between(out.started, t0);
    out.left = detect_view(*job.left, setup, out.left_image.get());
    out.right = detect_view(*job.right, setup, out.right_image.get());
    if (cfg.realtime_latency && setup.source.latency_s() > 0.0) {
      // One batched inference per stereo pair.
      std::this_thread::sleep_for(std::chrono::duration<double>(setup.source.latency_s()));
    }
    const auto t1 = Clock::now();
    out.detect_ms = ms_between(t0, t1);

    std::vector<Detection> left, right;
    for (const auto& d : out.left) {
      if (d.score >= cfg.score_min) left.push_back(d);
    }
    for (const auto& d : out.right) {
      if (d.score >= cfg.score_min) right.push_back(d);
    }
    const auto match = match_stereo(left, right, setup.rig);
    out.matches = match.pairs.size();
    for (const auto& pair : match.pairs) {
      try {
        out.targets.push_back(to_vehicle_frame(triangulate(pair, setup.rig, job.timestamp), setup.extrinsic));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::degenerate_geometry) throw;
      }
    }
    out.stereo_ms = ms_between(t1, Clock::now());
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

std::string skip_line(const FrameRef& f, std::string_view reason) {
  ordered_json j;
  j["image_id"] = f.image_id;
  j["camera"] = std::string(to_string(f.camera));
  j["timestamp"] = f.timestamp;
  j["reason"] = std::string(reason);
  return j.dump();
}

std::string pair_skip_line(std::size_t index, const PairJob& job, std::string_view reason) {
  ordered_json j;
  j["pair"] = index;
  j["left_id"] = job.left->image_id;
  j["right_id"] = job.right->image_id;
  j["timestamp"] = job.timestamp;
  j["reason"] = std::string(reason);
  return j.dump();
}

// Targets seen recently, in world coordinates along the drive.
class DedupeWindow {
 public:
  DedupeWindow(double radius, double expiry) : radius_(radius), expiry_(expiry) {}

  void expire(double vehicle_distance) {
    std::erase_if(seen_, [&](const Eigen::Vector3d& p) { return p.x() < vehicle_distance - expiry_; });
  }

  // True when `world` lies within the radius of a remembered target;
  // otherwise remembers it.
  bool check_and_insert(const Eigen::Vector3d& world) {
    for (const auto& p : seen_) {
      if ((p - world).norm() <= radius_) return true;
    }
    seen_.push_back(world);
    return false;
  }

 private:
  double radius_;
  double expiry_;
  std::vector<Eigen::Vector3d> seen_;
};

}  // namespace

PipelineResult run_pipeline(std::span<const FrameRef> frames, const PipelineConfig& cfg, const RunOptions& options) {
  const PipelineSetup setup = resolve_setup(cfg);
  PipelineResult result;
  auto& stats = result.stats;
  stats.frames_in = frames.size();
  stats.workers = cfg.workers;

  const Pairing pairing = pair_frames(frames, cfg.pair_tolerance_s);
  stats.pairs = pairing.pairs.size();
  stats.frames_unpaired = pairing.unpaired.size();
  for (const auto* f : pairing.unpaired) {
    std::fprintf(stderr, "warning: frame %s (t=%.6f) has no partner within %.3f s; skipped\n", f->image_id.c_str(),
                 f->timestamp, cfg.pair_tolerance_s);
    result.skips.push_back(skip_line(*f, "unpaired"));
  }

  std::unique_ptr<AsyncLogger> logger;
  if (cfg.log.enabled && (options.log_sink || !cfg.log.out_dir.empty())) {
    logger = std::make_unique<AsyncLogger>(cfg.log, options.log_sink);
  }

  const std::size_t n = pairing.pairs.size();
  const std::size_t window = 2 * static_cast<std::size_t>(cfg.workers);
  std::mutex mu;
  std::condition_variable cv;
  std::map<std::size_t, PairOutput> ready;
  std::size_t consumed = 0;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};

  const auto wall_start = Clock::now();
  std::vector<std::thread> workers;
  for (int w = 0; w < cfg.workers && n > 0; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        {
          std::unique_lock lock(mu);
          cv.wait(lock, [&] { return i < consumed + window || abort.load(); });
          if (abort.load()) return;
        }
        PairOutput out = process_pair(pairing.pairs[i], setup, cfg);
        std::lock_guard lock(mu);
        ready.emplace(i, std::move(out));
        cv.notify_all();
      }
    });
  }

  SprayScheduler scheduler(setup.nozzles);
  DedupeWindow dedupe(cfg.dedupe_radius_m, cfg.dedupe_expiry_m);
  const double latency = setup.source.latency_s();
  const VehicleState& vehicle = cfg.vehicle;
  std::vector<double> load_ms, detect_ms, stereo_ms, schedule_ms, e2e_ms;

  auto emit_commands = [&](std::vector<SprayCommand> cmds) {
    for (auto& c : cmds) {
      result.spray.push_back(to_spray_jsonl(c));
      result.commands.push_back(std::move(c));
    }
  };

  try {
    for (std::size_t k = 0; k < n; ++k) {
      PairOutput out;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return ready.contains(k); });
        out = std::move(ready.at(k));
        ready.erase(k);
      }
      const PairJob& job = pairing.pairs[k];
      const auto t_sched = Clock::now();

      if (!out.error.empty()) {
        ++stats.pairs_skipped;
        result.skips.push_back(pair_skip_line(k, job, "error: " + out.error));
      } else {
        ++stats.pairs_processed;
        stats.detections += out.left.size() + out.right.size();
        stats.matches += out.matches;

        ordered_json rec;
        rec["pair"] = k;
        rec["timestamp"] = job.timestamp;
        rec["left_id"] = job.left->image_id;
        rec["right_id"] = job.right->image_id;
        rec["left"] = ordered_json::array();
        rec["right"] = ordered_json::array();
        for (const auto& d : out.left) {
          rec["left"].push_back(detection_json(d));
          result.predictions.push_back(to_jsonl(d));
        }
        for (const auto& d : out.right) {
          rec["right"].push_back(detection_json(d));
          result.predictions.push_back(to_jsonl(d));
        }
        result.detections.push_back(rec.dump());

        // Results become usable only after the detector's latency; targets
        // are re-expressed relative to the vehicle at that moment.
        const double t_cap = job.timestamp;
        const double t_avail = std::max(t_cap + latency, vehicle.t0);
        const double d_cap = vehicle.distance_at(t_cap);
        const double d_avail = vehicle.distance_at(t_avail);
        dedupe.expire(d_avail);

        auto targets = out.targets;
        std::sort(targets.begin(), targets.end(), [](const FlowerTarget& a, const FlowerTarget& b) {
          return std::lexicographical_compare(a.position.data(), a.position.data() + 3, b.position.data(),
                                              b.position.data() + 3);
        });
        std::vector<FlowerTarget> fresh;
        for (const auto& t : targets) {
          const Eigen::Vector3d world(t.x() + d_cap, t.y(), t.z());
          const bool duplicate = dedupe.check_and_insert(world);
          ordered_json tj;
          tj["pair"] = k;
          tj["image_id"] = job.left->image_id;
          tj["xyz"] = {t.x(), t.y(), t.z()};
          tj["timestamp"] = t.timestamp;
          tj["world_x"] = world.x();
          tj["duplicate"] = duplicate;
          result.targets.push_back(tj.dump());
          ++stats.targets;
          if (duplicate) {
            ++stats.duplicates;
            continue;
          }
          FlowerTarget shifted = t;
          shifted.position.x() -= d_avail - d_cap;
          fresh.push_back(std::move(shifted));
        }

        std::vector<SprayMiss> misses;
        emit_commands(scheduler.submit(fresh, vehicle.at(t_avail), misses));
        for (const auto& m : misses) result.spray.push_back(to_spray_jsonl(m));
        stats.misses += misses.size();

        if (logger) {
          ordered_json ev;
          ev["pair"] = k;
          ev["timestamp"] = job.timestamp;
          ev["left_id"] = job.left->image_id;
          ev["right_id"] = job.right->image_id;
          ev["detections"] = out.left.size() + out.right.size();
          ev["matches"] = out.matches;
          ev["targets"] = out.targets.size();
          ev["new_targets"] = fresh.size();
          logger->log({"events", ev.dump(), {}});
          if (cfg.log.save_images) {
            for (const auto& img : {out.left_image, out.right_image}) {
              if (img) logger->log({"images", encode_ppm(*img), img->image_id + ".ppm"});
            }
          }
        }

        load_ms.push_back(out.load_ms);
        detect_ms.push_back(out.detect_ms);
        stereo_ms.push_back(out.stereo_ms);
        const auto t_done = Clock::now();
        schedule_ms.push_back(ms_between(t_sched, t_done));
        e2e_ms.push_back(ms_between(out.started, t_done));
      }

      std::lock_guard lock(mu);
      consumed = k + 1;
      cv.notify_all();
    }
  } catch (...) {
    {
      std::lock_guard lock(mu);
      abort = true;
      cv.notify_all();
    }
    for (auto& t : workers) t.join();
    throw;
  }
  for (auto& t : workers) t.join();
  emit_commands(scheduler.flush());
  stats.wall_s = std::chrono::duration<double>(Clock::now() - wall_start).count();

  stats.commands = result.commands.size();
  stats.throughput_fps = stats.wall_s > 0.0 ? static_cast<double>(stats.pairs_processed) / stats.wall_s : 0.0;
  stats.load_ms = summarize(std::move(load_ms));
  stats.detect_ms = summarize(std::move(detect_ms));
  stats.stereo_ms = summarize(std::move(stereo_ms));
  stats.schedule_ms = summarize(std::move(schedule_ms));
  stats.end_to_end_ms = summarize(std::move(e2e_ms));
  if (logger) {
    logger->shutdown();
    stats.logger = logger->stats();
  }
  return result;
}

void write_pipeline_outputs(const std::filesystem::path& dir, const PipelineResult& result) {
  std::filesystem::create_directories(dir);
  auto write_lines = [&](const char* name, const std::vector<std::string>& lines) {
    std::string text;
    for (const auto& l : lines) {
      text += l;
      text += '\n';
    }
    write_text_file(dir / name, text);
  };
  write_lines("detections.jsonl", result.detections);
  write_lines("predictions.jsonl", result.predictions);
  write_lines("targets.jsonl", result.targets);
  write_lines("spray.jsonl", result.spray);
  write_lines("skips.jsonl", result.skips);
  write_text_file(dir / "stats.txt", format_stats_text(result.stats));
  write_text_file(dir / "stats.kv", format_stats_kv(result.stats));
}

// ---------------------------------------------------------------------------
// Bench

BenchReport bench(const PipelineConfig& cfg_in, int n_frames, const RunOptions& options) {
  if (n_frames < 0) throw Error(ErrorCode::invalid_input, "frame count must be >= 0");
  PipelineConfig cfg = cfg_in;
  cfg.realtime_latency = true;
  const PipelineSetup setup = resolve_setup(cfg);

  BenchReport report;
  report.frames = n_frames;
  std::vector<FrameRef> frames;
  if (n_frames > 0) {
    const int distinct = std::min(n_frames, 8);
    const auto drive =
        synth_drive(resolve_scene_preset(cfg.bench_preset), setup.rig, cfg.vehicle, distinct, cfg.synth_seed);
    std::vector<std::shared_ptr<const ImageFrame>> cache(drive.frames.size());
    if (setup.source.kind == SourceKind::classical) {
      for (std::size_t i = 0; i < drive.frames.size(); ++i) cache[i] = drive.frames[i].load();
    }
    for (int i = 0; i < n_frames; ++i) {
      for (int c = 0; c < 2; ++c) {
        const std::size_t src = static_cast<std::size_t>(i % distinct) * 2 + c;
        FrameRef ref = drive.frames[src];
        ref.image_id = "bench_" + std::to_string(i) + (c == 0 ? "_L" : "_R");
        ref.timestamp = i * kDefaultFramePeriod;
        for (auto& d : ref.gt) d.image_id = ref.image_id;
        if (cache[src]) {
          ref.load = [img = cache[src]]() { return img; };
        }
        frames.push_back(std::move(ref));
      }
    }
  }

  PipelineResult result = run_pipeline(frames, cfg, options);
  report.stats = result.stats;
  report.budget_pass = n_frames > 0 && report.stats.throughput_fps >= kBudgetFps;

  char head[512];
  std::snprintf(head, sizeof head,
                "bench: %d stereo pairs, detector %s, %d worker(s)\n"
                "sustained %.2f pairs/s, detect p50 %.2f ms, stereo p50 %.3f ms, schedule p50 %.3f ms\n"
                "budget %.0f Hz: %s\n",
                n_frames, setup.source.spec.c_str(), cfg.workers, report.stats.throughput_fps,
                report.stats.detect_ms.p50, report.stats.stereo_ms.p50, report.stats.schedule_ms.p50, kBudgetFps,
                n_frames == 0 ? "n/a (no frames)" : (report.budget_pass ? "PASS" : "FAIL"));
  report.text = std::string(head) + format_stats_text(report.stats);
  report.kv = format_stats_kv(report.stats) + "bench_frames=" + std::to_string(n_frames) +
              "\nbudget_fps=" + std::to_string(kBudgetFps) + "\nbudget_pass=" + (report.budget_pass ? "1" : "0") +
              "\ndetector=" + setup.source.spec + "\n";
  return report;
}

}  // namespace kiwi
