#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "kiwi/detector_emulator.hpp"
#include "kiwi/jsonl.hpp"
#include "support.hpp"

using namespace kiwi;

namespace {

std::vector<Detection> random_gt(test::Gen& gen, int images, int per_image, const std::string& prefix = "img") {
  std::vector<Detection> gt;
  for (int i = 0; i < images; ++i) {
    for (int k = 0; k < per_image; ++k) {
      Detection d;
      d.image_id = prefix + std::to_string(i) + "_L";
      d.bbox = {gen.uniform(0, 1800), gen.uniform(0, 1000), gen.uniform(8, 40), gen.uniform(8, 40)};
      gt.push_back(d);
    }
  }
  return gt;
}

DetectorProfile perfect() {
  DetectorProfile p;
  p.name = "perfect";
  p.center_jitter_sigma = 0.0;
  p.score_min = p.score_max = 1.0;
  return p;
}

}  // namespace

TEST_CASE("built-in profiles") {
  CHECK(resolve_profile("nas").precision_target == 0.968);
  CHECK(resolve_profile("nas").recall_target == 0.680);
  CHECK(resolve_profile("nas").latency_ms == 1833.0);
  CHECK(resolve_profile("frcnn_iv2").precision_target == 0.904);
  CHECK(resolve_profile("frcnn_iv2").recall_target == 0.758);
  CHECK(resolve_profile("frcnn_iv2").latency_ms == 58.0);
  CHECK(resolve_profile("ssd_iv2").precision_target == 0.785);
  CHECK(resolve_profile("ssd_iv2").recall_target == 0.612);
  CHECK(resolve_profile("ssd_iv2").latency_ms == 42.0);
  CHECK_THROWS_AS(resolve_profile("yolo"), Error);
}

TEST_CASE("profile files") {
  test::TempDir dir("profile");
  {
    std::ofstream(dir / "p.ini") << "[profile]\nname = custom\nprecision_target = 0.9\nrecall_target = 0.8\n"
                                    "latency_ms = 12\nscore_distribution = 0.6 0.9\n";
    std::ofstream(dir / "zero.ini") << "[profile]\nprecision_target = 0\n";
  }
  const auto p = resolve_profile("file:" + (dir / "p.ini").string());
  CHECK(p.name == "custom");
  CHECK(p.latency_ms == 12.0);
  CHECK(p.score_min == 0.6);
  CHECK(p.score_max == 0.9);
  try {
    resolve_profile("file:" + (dir / "zero.ini").string());
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::config);
  }
}

TEST_CASE("degenerate profile reproduces ground truth") {
  test::Gen gen(3);
  auto gt = random_gt(gen, 20, 7);
  const auto out = emulate(gt, perfect(), 42);
  REQUIRE(out.size() == gt.size());
  // Output is grouped by image id in lexical order, input order within an image.
  std::stable_sort(gt.begin(), gt.end(), [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  CHECK(out == gt);
}

TEST_CASE("determinism and seed sensitivity") {
  test::Gen gen(4);
  const auto gt = random_gt(gen, 30, 10);
  const auto a = emulate(gt, profile_frcnn_iv2(), 7);
  const auto b = emulate(gt, profile_frcnn_iv2(), 7);
  std::string ja, jb;
  for (const auto& d : a) ja += to_jsonl(d) + "\n";
  for (const auto& d : b) jb += to_jsonl(d) + "\n";
  CHECK(ja == jb);
  CHECK(a != emulate(gt, profile_frcnn_iv2(), 8));
}

TEST_CASE("zero precision is a config error") {
  DetectorProfile p = perfect();
  p.precision_target = 0.0;
  test::Gen gen(1);
  const auto gt = random_gt(gen, 1, 1);
  try {
    emulate(gt, p, 1);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::config);
  }
}

TEST_CASE("mixed image ids in the single-image variant") {
  test::Gen gen(1);
  const auto gt = random_gt(gen, 2, 1);
  CHECK_THROWS_AS(emulate_image(gt, perfect(), 1), Error);
}

TEST_CASE("kept fraction matches recall") {
  test::Gen gen(5);
  const auto gt = random_gt(gen, 200, 60);  // 12000 boxes
  const double n = static_cast<double>(gt.size());
  for (const auto* p : {&profile_nas(), &profile_frcnn_iv2(), &profile_ssd_iv2()}) {
    DetectorProfile prof = *p;
    prof.precision_target = 1.0;  // true positives only
    const auto out = emulate(gt, prof, 99);
    const double r = prof.recall_target;
    const double kept = static_cast<double>(out.size()) / n;
    CHECK(std::abs(kept - r) <= 4.0 * std::sqrt(r * (1.0 - r) / n));
  }
}

TEST_CASE("outputs stay inside the frame") {
  test::Gen gen(6);
  std::vector<Detection> gt;
  // Boxes hugging every border so jitter pushes outward.
  for (int i = 0; i < 400; ++i) {
    Detection d;
    d.image_id = "edge" + std::to_string(i % 10);
    const double w = gen.uniform(5, 30), h = gen.uniform(5, 30);
    switch (i % 4) {
      case 0: d.bbox = {0, gen.uniform(0, 1080 - h), w, h}; break;
      case 1: d.bbox = {1920 - w, gen.uniform(0, 1080 - h), w, h}; break;
      case 2: d.bbox = {gen.uniform(0, 1920 - w), 0, w, h}; break;
      default: d.bbox = {gen.uniform(0, 1920 - w), 1080 - h, w, h}; break;
    }
    gt.push_back(d);
  }
  DetectorProfile p = profile_ssd_iv2();
  p.center_jitter_sigma = 5.0;
  for (const auto& d : emulate(gt, p, 3)) {
    CHECK(d.bbox.within(1920, 1080));
    CHECK(d.score >= p.score_min);
    CHECK(d.score <= p.score_max);
  }
}

TEST_CASE("replay") {
  test::TempDir dir("replay");
  write_text_file(dir / "empty.jsonl", "");
  CHECK(replay(dir / "empty.jsonl").empty());

  write_text_file(dir / "one.jsonl",
                  R"({"image_id":"a_L","camera":"left","bbox":[1,2,3,4],"score":0.9,"label":"flower"})" "\n");
  const auto one = replay(dir / "one.jsonl");
  REQUIRE(one.size() == 1);
  REQUIRE(one.at("a_L").size() == 1);
  CHECK(one.at("a_L")[0].bbox == BBox{1, 2, 3, 4});

  write_text_file(dir / "bad.jsonl",
                  R"({"image_id":"a_L","camera":"left","bbox":[1,2,-3,4],"score":0.9,"label":"flower"})" "\n");
  try {
    replay(dir / "bad.jsonl");
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::validation);
  }
}

TEST_CASE("latency") {
  const std::vector<double> t10{10.0};
  CHECK(simulate_latency(profile_ssd_iv2(), t10)[0] == doctest::Approx(10.042).epsilon(1e-12));
  const std::vector<double> t0{0.0};
  CHECK(simulate_latency(profile_nas(), t0)[0] == doctest::Approx(1.833).epsilon(1e-12));
  const std::vector<double> ts{0.0, 0.05, 0.1, 7.25};
  CHECK(simulate_latency(perfect(), ts) == ts);
}
