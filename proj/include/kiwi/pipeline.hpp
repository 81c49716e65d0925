#pragma once

// End-to-end orchestration: stereo frames in, spray commands and logs out.
//
// Pairs are detected, matched and triangulated in parallel by `workers`
// threads; results are handed back in capture order to a single consumer
// that deduplicates targets, runs the spray scheduler and feeds the logger.
// All outputs are produced by that consumer, so they do not depend on the
// worker count.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kiwi/async_logger.hpp"
#include "kiwi/classical_detector.hpp"
#include "kiwi/core.hpp"
#include "kiwi/detector_emulator.hpp"
#include "kiwi/spray_scheduler.hpp"
#include "kiwi/stereo_locator.hpp"
#include "kiwi/synthetic_orchard.hpp"

namespace kiwi {

constexpr double kPairTolerance = 0.010;  // s

enum class SourceKind { classical, emulate, file };

struct DetectorSource {
  SourceKind kind = SourceKind::classical;
  std::string spec = "classical";
  DetectorConfig classical;
  DetectorProfile profile;
  std::uint64_t seed = 0;
  std::shared_ptr<const DetectionsByImage> replay;

  // Simulated inference delay per stereo pair; zero for measured paths.
  double latency_s() const;
};

// "classical", "classical:<cfg>", "emulate:<profile>[,<seed>]" or
// "file:<detections.jsonl>". Relative paths resolve against base_dir.
DetectorSource parse_detector_source(std::string_view spec, const std::filesystem::path& base_dir = {});

struct PipelineConfig {
  std::string detector = "classical";
  std::filesystem::path rig_path;        // [rig] and optional [extrinsic]
  std::filesystem::path extrinsic_path;  // overrides the rig file's [extrinsic]
  std::filesystem::path nozzle_path;
  VehicleState vehicle{0.5, 0.0, 0.0};
  double score_min = 0.5;
  double dedupe_radius_m = 0.02;
  double dedupe_expiry_m = 0.5;
  double pair_tolerance_s = kPairTolerance;
  int workers = 1;
  // Sleep for the emulated latency instead of only accounting for it.
  bool realtime_latency = false;
  LoggerConfig log;
  // Synthetic drives (pipeline --frames <preset>, bench).
  std::uint64_t synth_seed = 1;
  int synth_frames = 100;
  std::string bench_preset = "B2";
  std::filesystem::path base_dir;

  void validate() const;
};

// [pipeline] detector, rig, extrinsic, nozzles, vehicle, score_min,
//            dedupe_radius_m, dedupe_expiry_m, pair_tolerance_s, workers,
//            realtime_latency
// [log]      enabled, out_dir, queue_capacity, drop_policy, save_images, max_record_bytes
// [synth]    seed, frames, bench_preset
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
PipelineConfig parse_pipeline_config(std::string_view text, const std::filesystem::path& base_dir = {});

// KIWI_WORKERS and KIWI_LOG_DIR.
void apply_env_overrides(PipelineConfig& cfg);

// Everything a run needs, resolved and validated before streaming.
struct PipelineSetup {
  DetectorSource source;
  StereoRig rig;
  RigidTransform extrinsic;
  NozzleConfig nozzles;
};

PipelineSetup resolve_setup(const PipelineConfig& cfg);

struct FrameRef {
  std::string image_id;
  Camera camera = Camera::left;
  double timestamp = 0.0;
  std::function<std::shared_ptr<const ImageFrame>()> load;
  std::vector<Detection> gt;  // used by the emulated detector
};

// frames.csv (image_id,camera,timestamp,file) plus gt_left/gt_right.jsonl
// when present. Without frames.csv, image files named <id>_L / <id>_R are
// paired by name and stamped at the capture period.
std::vector<FrameRef> load_frame_dir(const std::filesystem::path& dir);

// A drive along a synthetic canopy strip: pair i is captured at i * period
// after the vehicle has moved distance_at(i * period).
struct SynthDrive {
  std::vector<FrameRef> frames;
  std::vector<Flower> flowers;  // camera frame at t = 0
};
SynthDrive synth_drive(const SceneSpec& spec, const StereoRig& rig, const VehicleState& vehicle, int n_pairs,
                       std::uint64_t seed, double period = kDefaultFramePeriod);

struct LatencySummary {
  double p50 = 0.0;
  double p90 = 0.0;
  double p99 = 0.0;
  double max = 0.0;
};
LatencySummary summarize(std::vector<double> samples_ms);

struct PipelineStats {
  std::size_t frames_in = 0;
  std::size_t pairs = 0;
  std::size_t pairs_processed = 0;
  std::size_t pairs_skipped = 0;
  std::size_t frames_unpaired = 0;
  std::size_t detections = 0;
  std::size_t matches = 0;
  std::size_t targets = 0;
  std::size_t duplicates = 0;
  std::size_t commands = 0;
  std::size_t misses = 0;
  int workers = 1;
  double wall_s = 0.0;
  double throughput_fps = 0.0;  // processed stereo pairs per second
  LatencySummary load_ms;  // image read or render
  LatencySummary detect_ms;
  LatencySummary stereo_ms;
  LatencySummary schedule_ms;
  LatencySummary end_to_end_ms;
  std::optional<LoggerStats> logger;
};

struct PipelineResult {
  std::vector<std::string> detections;   // one record per processed pair
  std::vector<std::string> predictions;  // flat detection JSONL
  std::vector<std::string> targets;
  std::vector<std::string> spray;
  std::vector<std::string> skips;
  std::vector<SprayCommand> commands;
  PipelineStats stats;
};

struct RunOptions {
  LogSink log_sink;  // replaces the file sink when set
};

// Frames need not be sorted; they are ordered by timestamp per camera and
// paired within cfg.pair_tolerance_s. Throws on configuration errors before
// any frame is processed.
PipelineResult run_pipeline(std::span<const FrameRef> frames, const PipelineConfig& cfg,
                            const RunOptions& options = {});

// detections.jsonl, predictions.jsonl, targets.jsonl, spray.jsonl,
// skips.jsonl, stats.txt, stats.kv
void write_pipeline_outputs(const std::filesystem::path& dir, const PipelineResult& result);

std::string format_stats_text(const PipelineStats& stats);
std::string format_stats_kv(const PipelineStats& stats);

constexpr double kBudgetFps = 20.0;

struct BenchReport {
  PipelineStats stats;
  int frames = 0;
  bool budget_pass = false;
  std::string text;
  std::string kv;
};

// Runs `n_frames` stereo pairs cycled from a few pre-rendered synthetic
// pairs and reports throughput against the capture rate.
BenchReport bench(const PipelineConfig& cfg, int n_frames, const RunOptions& options = {});

}  // namespace kiwi
