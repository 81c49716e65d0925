#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <mutex>

#include "kiwi/jsonl.hpp"
#include "kiwi/pipeline.hpp"
#include "support.hpp"

using namespace kiwi;

namespace {

std::vector<FrameRef> frames_for(const SceneTruth& truth, double t) {
  auto shared = std::make_shared<const SceneTruth>(truth);
  std::vector<FrameRef> out;
  for (Camera cam : {Camera::left, Camera::right}) {
    FrameRef f;
    f.image_id = cam == Camera::left ? truth.left_id : truth.right_id;
    f.camera = cam;
    f.timestamp = t;
    f.gt = cam == Camera::left ? truth.gt_left : truth.gt_right;
    f.load = [shared, cam] { return std::make_shared<const ImageFrame>(render_view(*shared, cam)); };
    out.push_back(std::move(f));
  }
  return out;
}

PipelineConfig emulated(int workers) {
  PipelineConfig cfg;
  cfg.detector = "emulate:frcnn_iv2,3";
  cfg.workers = workers;
  cfg.log.enabled = false;
  return cfg;
}

std::vector<FrameRef> drive(int pairs) {
  return synth_drive(scene_preset("B2"), StereoRig{}, {0.5, 0.0, 0.0}, pairs, 12).frames;
}

}  // namespace

TEST_CASE("empty stream") {
  PipelineConfig cfg;
  cfg.log.enabled = false;
  const auto r = run_pipeline({}, cfg);
  CHECK(r.stats.frames_in == 0);
  CHECK(r.stats.pairs == 0);
  CHECK(r.stats.pairs_processed == 0);
  CHECK(r.stats.commands == 0);
  CHECK(r.spray.empty());
  CHECK(r.skips.empty());
}

TEST_CASE("single flower dead ahead") {
  StereoRig rig;
  Flower fl;
  fl.position = {0.0, -0.3, 1.0};
  fl.radius_m = 0.025;
  fl.stigma_radius_m = 0.01;
  SceneSpec spec;
  spec.name = "ahead";
  const auto truth = truth_from_flowers(spec, rig, {fl});
  const auto frames = frames_for(truth, 0.0);

  PipelineConfig cfg;
  cfg.log.enabled = false;
  const auto r = run_pipeline(frames, cfg);
  REQUIRE(r.commands.size() == 1);
  CHECK(r.stats.pairs_processed == 1);

  // Independent path: detect, match, triangulate, mount, solve.
  const DetectorConfig dcfg;
  std::vector<Detection> left, right;
  for (auto& d : detect_stigmas(render_view(truth, Camera::left), dcfg))
    if (d.score >= cfg.score_min) left.push_back(d);
  for (auto& d : detect_stigmas(render_view(truth, Camera::right), dcfg))
    if (d.score >= cfg.score_min) right.push_back(d);
  const auto m = match_stereo(left, right, rig);
  REQUIRE(m.pairs.size() == 1);
  const auto target = to_vehicle_frame(triangulate(m.pairs[0], rig, 0.0), RigidTransform::upward_camera());
  CHECK(target.x() == doctest::Approx(0.3).epsilon(0.02));
  CHECK(std::abs(target.y()) < 0.01);
  const NozzleConfig nozzles;
  const double expected = solve_fire_time(target, cfg.vehicle, nozzles.nozzles[0], nozzles.actuation_latency);
  CHECK(std::abs(r.commands[0].fire_time - expected) <= 1e-6);
}

TEST_CASE("emulated runs are deterministic") {
  const auto frames = drive(100);
  const auto a = run_pipeline(frames, emulated(1));
  const auto b = run_pipeline(frames, emulated(1));
  CHECK(a.stats.pairs_processed + a.stats.pairs_skipped == a.stats.pairs);
  CHECK(a.stats.pairs == 100);
  CHECK(a.spray == b.spray);
  CHECK(a.detections == b.detections);
  CHECK(a.targets == b.targets);
  CHECK_FALSE(a.spray.empty());

  auto c = run_pipeline(frames, emulated(4));
  CHECK(c.detections == a.detections);
  auto sa = a.spray, sc = c.spray;
  std::sort(sa.begin(), sa.end());
  std::sort(sc.begin(), sc.end());
  CHECK(sa == sc);

  // Input order does not matter.
  auto shuffled = frames;
  test::Gen gen(5);
  std::shuffle(shuffled.begin(), shuffled.end(), gen.engine());
  CHECK(run_pipeline(shuffled, emulated(2)).spray == a.spray);
}

TEST_CASE("unpaired frames become skip lines") {
  auto frames = drive(3);
  FrameRef lonely = frames[0];
  lonely.image_id = "lonely_L";
  lonely.timestamp = 5.0;
  frames.push_back(lonely);
  const auto r = run_pipeline(frames, emulated(1));
  CHECK(r.stats.pairs == 3);
  CHECK(r.stats.frames_unpaired == 1);
  REQUIRE(r.skips.size() == 1);
  CHECK(r.skips[0].find("\"lonely_L\"") != std::string::npos);
  CHECK(r.skips[0].find("unpaired") != std::string::npos);
}

TEST_CASE("failing pairs are skipped, not fatal") {
  auto frames = drive(4);
  PipelineConfig cfg;
  cfg.log.enabled = false;
  for (auto& f : frames)
    if (f.timestamp > 0.07 && f.timestamp < 0.12) f.load = []() -> std::shared_ptr<const ImageFrame> {
        throw Error(ErrorCode::io, "unreadable");
      };
  const auto r = run_pipeline(frames, cfg);
  CHECK(r.stats.pairs == 4);
  CHECK(r.stats.pairs_skipped == 1);
  CHECK(r.stats.pairs_processed == 3);
  REQUIRE(r.skips.size() == 1);
  CHECK(r.skips[0].find("unreadable") != std::string::npos);
}

TEST_CASE("logger receives one event per processed pair") {
  std::mutex mu;
  std::size_t events = 0;
  PipelineConfig cfg = emulated(2);
  cfg.log.enabled = true;
  RunOptions opts;
  opts.log_sink = [&](const LogRecord& rec) {
    std::lock_guard lock(mu);
    events += rec.stream == "events";
  };
  const auto r = run_pipeline(drive(20), cfg, opts);
  REQUIRE(r.stats.logger.has_value());
  CHECK(r.stats.logger->offered == 20);
  CHECK(r.stats.logger->persisted + r.stats.logger->dropped == 20);
  CHECK(events == r.stats.logger->persisted);
}

TEST_CASE("outputs on disk") {
  test::TempDir dir("pipe");
  const auto r = run_pipeline(drive(5), emulated(1));
  write_pipeline_outputs(dir.path(), r);
  for (const char* name : {"detections.jsonl", "predictions.jsonl", "targets.jsonl", "spray.jsonl", "skips.jsonl",
                           "stats.txt", "stats.kv"})
    CHECK(std::filesystem::exists(dir / name));
  CHECK(read_detections(dir / "predictions.jsonl").size() == r.stats.detections);
  CHECK(read_text_file(dir / "stats.kv").find("pairs_processed=5") != std::string::npos);
}

TEST_CASE("detector sources and configuration") {
  CHECK(parse_detector_source("classical").kind == SourceKind::classical);
  const auto em = parse_detector_source("emulate:ssd_iv2,9");
  CHECK(em.kind == SourceKind::emulate);
  CHECK(em.seed == 9);
  CHECK(em.latency_s() == doctest::Approx(0.042));
  CHECK(parse_detector_source("classical").latency_s() == 0.0);
  CHECK_THROWS_AS(parse_detector_source("magic"), Error);
  CHECK_THROWS_AS(parse_detector_source("file:/nonexistent.jsonl"), Error);

  const auto cfg = parse_pipeline_config(
      "[pipeline]\ndetector = emulate:nas\nvehicle = v=1.0,a=0.1\nworkers = 3\nscore_min = 0.6\n"
      "[log]\nqueue_capacity = 64\ndrop_policy = drop_newest\n[synth]\nframes = 7\n");
  CHECK(cfg.detector == "emulate:nas");
  CHECK(cfg.vehicle.v0 == 1.0);
  CHECK(cfg.vehicle.a == 0.1);
  CHECK(cfg.workers == 3);
  CHECK(cfg.score_min == 0.6);
  CHECK(cfg.log.queue_capacity == 64);
  CHECK(cfg.log.drop_policy == DropPolicy::drop_newest);
  CHECK(cfg.synth_frames == 7);
  CHECK_THROWS_AS(parse_pipeline_config("[pipeline]\nworkers = 0\n"), Error);

  PipelineConfig env = cfg;
  ::setenv("KIWI_WORKERS", "5", 1);
  ::setenv("KIWI_LOG_DIR", "/tmp/kiwi_env_logs", 1);
  apply_env_overrides(env);
  ::unsetenv("KIWI_WORKERS");
  ::unsetenv("KIWI_LOG_DIR");
  CHECK(env.workers == 5);
  CHECK(env.log.out_dir == "/tmp/kiwi_env_logs");
}

TEST_CASE("bench") {
  PipelineConfig cfg;
  cfg.log.enabled = false;
  const auto empty = bench(cfg, 0);
  CHECK(empty.text.find("n/a (no frames)") != std::string::npos);
  CHECK_FALSE(empty.budget_pass);

  cfg.detector = "emulate:ssd_iv2";
  const auto fast = bench(cfg, 20);
  CHECK(fast.stats.pairs_processed == 20);
  CHECK(fast.budget_pass);

  cfg.detector = "emulate:nas";
  cfg.realtime_latency = true;
  const auto slow = bench(cfg, 2);
  CHECK(slow.stats.throughput_fps < 1.0);
  CHECK_FALSE(slow.budget_pass);
  CHECK(slow.text.find("FAIL") != std::string::npos);
}

TEST_CASE("latency summary") {
  const auto s = summarize({5, 1, 4, 2, 3});
  CHECK(s.p50 == 3.0);
  CHECK(s.max == 5.0);
  CHECK(s.p90 <= s.p99);
  CHECK(summarize({}).max == 0.0);
}
