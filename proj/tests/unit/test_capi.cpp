#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "kiwi/kiwi.h"

namespace fs = std::filesystem;

namespace {

struct Ctx {
  kiwi_context* c = kiwi_context_create();
  ~Ctx() { kiwi_context_destroy(c); }
  operator kiwi_context*() const { return c; }
};

fs::path scratch(const std::string& tag) {
  const auto p = fs::temp_directory_path() / ("kiwi_capi_" + tag + "_" + std::to_string(std::random_device{}()));
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("version and status strings") {
  CHECK(std::strlen(kiwi_version()) > 0);
  CHECK(std::string(kiwi_status_string(KIWI_OK)) == "ok");
  CHECK(std::string(kiwi_status_string(KIWI_E_BEHIND_CAMERA)) == "behind_camera");
  CHECK(std::strlen(kiwi_status_string(static_cast<kiwi_status>(1234))) > 0);
}

TEST_CASE("geometry and metrics") {
  const kiwi_bbox a{0, 0, 10, 10}, b{5, 0, 10, 10};
  CHECK(kiwi_iou(&a, &b) == doctest::Approx(1.0 / 3.0));
  const auto m = kiwi_compute_metrics(10, 2, 3);
  CHECK(m.precision == doctest::Approx(0.8333).epsilon(1e-4));
  CHECK(m.recall == doctest::Approx(0.7692).epsilon(1e-4));
  CHECK(m.f1 == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(kiwi_compute_metrics(0, 0, 0).f1 == 0.0);

  Ctx ctx;
  kiwi_rig rig;
  kiwi_rig_default(&rig);
  CHECK(rig.width == 1920);
  const double p[3] = {0.1, -0.2, 1.5};
  double l[2], r[2], back[3];
  REQUIRE(kiwi_project(ctx, &rig, p, KIWI_LEFT, l) == KIWI_OK);
  REQUIRE(kiwi_project(ctx, &rig, p, KIWI_RIGHT, r) == KIWI_OK);
  REQUIRE(kiwi_triangulate(ctx, &rig, l[0], l[1], r[0], back) == KIWI_OK);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(back[i] - p[i]) < 1e-9);

  const double behind[3] = {0, 0, -1};
  CHECK(kiwi_project(ctx, &rig, behind, KIWI_LEFT, l) == KIWI_E_BEHIND_CAMERA);
  CHECK(std::strlen(kiwi_last_error(ctx)) > 0);
  CHECK(kiwi_triangulate(ctx, &rig, 500, 500, 500, back) == KIWI_E_DEGENERATE_GEOMETRY);

  const double target[3] = {1.0, 0.0, 1.5};
  const kiwi_vehicle v{0.5, 0.0, 0.0};
  double t = 0;
  CHECK(kiwi_solve_fire_time(ctx, target, &v, 0.0, 0.0, 0.0, &t) == KIWI_OK);
  CHECK(t == 2.0);
  const double behind_target[3] = {-0.5, 0.0, 1.5};
  CHECK(kiwi_solve_fire_time(ctx, behind_target, &v, 0.0, 0.0, 0.0, &t) == KIWI_E_TARGET_UNREACHABLE);
  CHECK(kiwi_solve_fire_time(ctx, target, &v, 0.0, 0.0, 0.0, nullptr) == KIWI_E_INVALID_INPUT);
}

TEST_CASE("detector on a caller buffer") {
  Ctx ctx;
  kiwi_detector* det = kiwi_detector_create(ctx, nullptr);
  REQUIRE(det != nullptr);

  const int w = 320, h = 240;
  const size_t stride = w * 3 + 16;  // padded rows
  std::vector<uint8_t> buf(stride * h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      uint8_t* px = buf.data() + stride * y + 3 * x;
      const double dx = x + 0.5 - 160, dy = y + 0.5 - 120;
      const double d2 = dx * dx + dy * dy;
      if (d2 <= 6 * 6) {
        px[0] = 252, px[1] = 252, px[2] = 246;
      } else if (d2 <= 15 * 15) {
        px[0] = 235, px[1] = 200, px[2] = 40;
      } else {
        px[0] = 30, px[1] = 72, px[2] = 32;
      }
    }

  kiwi_detections* list = nullptr;
  REQUIRE(kiwi_detector_run(ctx, det, buf.data(), w, h, stride, &list) == KIWI_OK);
  REQUIRE(kiwi_detections_count(list) == 1);
  kiwi_detection d;
  REQUIRE(kiwi_detections_get(list, 0, &d) == KIWI_OK);
  CHECK(std::abs(d.bbox.x + d.bbox.w / 2 - 160) < 1.0);
  CHECK(std::abs(d.bbox.y + d.bbox.h / 2 - 120) < 1.0);
  CHECK(kiwi_detections_get(list, 1, &d) == KIWI_E_INVALID_INPUT);
  kiwi_detections_destroy(list);

  CHECK(kiwi_detector_run(ctx, det, buf.data(), w, h, 10, &list) == KIWI_E_INVALID_INPUT);
  CHECK(kiwi_detector_run(ctx, det, nullptr, w, h, stride, &list) == KIWI_E_INVALID_INPUT);
  kiwi_detector_destroy(det);

  CHECK(kiwi_detector_create(ctx, "/nonexistent/detector.ini") == nullptr);
  CHECK(std::strlen(kiwi_last_error(ctx)) > 0);
}

TEST_CASE("file round trip through the library") {
  Ctx ctx;
  const auto dir = scratch("files");
  const std::string ds = (dir / "ds").string();
  REQUIRE(kiwi_synth(ctx, "B2", 2, 3, nullptr, ds.c_str()) == KIWI_OK);
  CHECK(fs::exists(dir / "ds" / "gt_left.jsonl"));

  const std::string gt = (dir / "ds" / "gt_left.jsonl").string();
  const std::string pred = (dir / "pred.jsonl").string();
  REQUIRE(kiwi_emulate_file(ctx, gt.c_str(), "nas", 1, pred.c_str()) == KIWI_OK);

  const std::string manifest = (dir / "ds" / "manifest.csv").string();
  REQUIRE(kiwi_evaluate_files(ctx, gt.c_str(), gt.c_str(), manifest.c_str(), 0.5, 0.5, nullptr, nullptr) == KIWI_OK);
  const std::string report = kiwi_report(ctx);
  CHECK(report.find("overall") != std::string::npos);
  CHECK(report.find("1.000") != std::string::npos);

  CHECK(kiwi_synth(ctx, "Z9", 2, 3, nullptr, ds.c_str()) == KIWI_E_CONFIG);
  CHECK(kiwi_emulate_file(ctx, "/nonexistent.jsonl", "nas", 1, pred.c_str()) == KIWI_E_IO);
  CHECK(kiwi_emulate_file(ctx, gt.c_str(), "bogus", 1, pred.c_str()) == KIWI_E_CONFIG);

  int pass = -1;
  REQUIRE(kiwi_bench(ctx, nullptr, 0, nullptr, &pass) == KIWI_OK);
  CHECK(pass == 0);
  CHECK(std::string(kiwi_report(ctx)).find("n/a (no frames)") != std::string::npos);

  fs::remove_all(dir);
}

TEST_CASE("null context") {
  CHECK(kiwi_synth(nullptr, "B2", 1, 1, nullptr, "/tmp/x") == KIWI_E_INVALID_INPUT);
  CHECK(std::string(kiwi_last_error(nullptr)).empty());
  CHECK(std::string(kiwi_report(nullptr)).empty());
}
