#include "kiwi/kiwi.h"

#include <algorithm>
#include <cstring>
#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "kiwi/classical_detector.hpp"
#include "kiwi/core.hpp"
#include "kiwi/detector_emulator.hpp"
#include "kiwi/evaluator.hpp"
#include "kiwi/image_io.hpp"
#include "kiwi/jsonl.hpp"
#include "kiwi/pipeline.hpp"
#include "kiwi/spray_scheduler.hpp"
#include "kiwi/stereo_locator.hpp"
#include "kiwi/synthetic_orchard.hpp"

namespace fs = std::filesystem;

struct kiwi_context {
  std::string error;
  std::string report;
};

struct kiwi_detector {
  kiwi::DetectorConfig cfg;
};

struct kiwi_detections {
  std::vector<kiwi::Detection> items;
};

namespace {

kiwi_status status_of(kiwi::ErrorCode code) {
  using kiwi::ErrorCode;
  switch (code) {
    case ErrorCode::invalid_input: return KIWI_E_INVALID_INPUT;
    case ErrorCode::parse: return KIWI_E_PARSE;
    case ErrorCode::validation: return KIWI_E_VALIDATION;
    case ErrorCode::config: return KIWI_E_CONFIG;
    case ErrorCode::io: return KIWI_E_IO;
    case ErrorCode::degenerate_geometry: return KIWI_E_DEGENERATE_GEOMETRY;
    case ErrorCode::behind_camera: return KIWI_E_BEHIND_CAMERA;
    case ErrorCode::target_unreachable: return KIWI_E_TARGET_UNREACHABLE;
    case ErrorCode::too_late: return KIWI_E_TOO_LATE;
    case ErrorCode::generation: return KIWI_E_GENERATION;
    case ErrorCode::shutdown: return KIWI_E_SHUTDOWN;
  }
  return KIWI_E_INTERNAL;
}

// Runs `fn`, translating exceptions into a status and a context message.
template <typename Fn>
kiwi_status guarded(kiwi_context* ctx, Fn&& fn) {
  if (ctx != nullptr) ctx->error.clear();
  kiwi_status st = KIWI_OK;
  std::string msg;
  try {
    fn();
  } catch (const kiwi::Error& e) {
    st = status_of(e.code());
    msg = e.what();
  } catch (const fs::filesystem_error& e) {
    st = KIWI_E_IO;
    msg = e.what();
  } catch (const std::bad_alloc&) {
    st = KIWI_E_INTERNAL;
    msg = "out of memory";
  } catch (const std::exception& e) {
    st = KIWI_E_INTERNAL;
    msg = e.what();
  } catch (...) {
    st = KIWI_E_INTERNAL;
    msg = "unknown error";
  }
  if (ctx != nullptr) ctx->error = std::move(msg);
  return st;
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw kiwi::Error(kiwi::ErrorCode::invalid_input, std::string(what) + " must not be null");
}

const char* require_str(const char* s, const char* what) {
  if (s == nullptr || *s == '\0') throw kiwi::Error(kiwi::ErrorCode::invalid_input, std::string(what) + " is required");
  return s;
}

kiwi::StereoRig to_rig(const kiwi_rig& r) {
  kiwi::StereoRig rig;
  rig.focal_px = r.focal_px;
  rig.baseline_m = r.baseline_m;
  rig.cx = r.cx;
  rig.cy = r.cy;
  rig.width = r.width;
  rig.height = r.height;
  rig.eps_row_px = r.eps_row_px;
  rig.d_min = r.d_min;
  rig.d_max = r.d_max;
  rig.validate();
  return rig;
}

void from_rig(const kiwi::StereoRig& rig, kiwi_rig& r) {
  r.focal_px = rig.focal_px;
  r.baseline_m = rig.baseline_m;
  r.cx = rig.cx;
  r.cy = rig.cy;
  r.width = rig.width;
  r.height = rig.height;
  r.eps_row_px = rig.eps_row_px;
  r.d_min = rig.d_min;
  r.d_max = rig.d_max;
}

bool is_image(const fs::path& p) {
  const auto ext = p.extension().string();
  return ext == ".ppm" || ext == ".png";
}

// Pair id of a per-view image id: "<id>_L" / "<id>_R" -> "<id>".
std::string pair_id(const std::string& image_id) {
  if (image_id.size() > 2 && image_id[image_id.size() - 2] == '_' &&
      (image_id.back() == 'L' || image_id.back() == 'R')) {
    return image_id.substr(0, image_id.size() - 2);
  }
  return image_id;
}

std::map<std::string, double> frame_times(const fs::path& csv) {
  std::map<std::string, double> out;
  std::istringstream in(kiwi::read_text_file(csv));
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || (n == 1 && line.starts_with("image_id"))) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cols.push_back(c);
    if (cols.size() < 3) throw kiwi::Error(kiwi::ErrorCode::parse, csv.string() + " line " + std::to_string(n));
    try {
      out[pair_id(cols[0])] = std::stod(cols[2]);
    } catch (const std::exception&) {
      throw kiwi::Error(kiwi::ErrorCode::parse, csv.string() + " line " + std::to_string(n) + ": bad timestamp");
    }
  }
  return out;
}

kiwi::PipelineConfig pipeline_config(const char* config_path) {
  kiwi::PipelineConfig cfg;
  if (config_path != nullptr && *config_path != '\0') {
    cfg = kiwi::load_pipeline_config(config_path);
  } else {
    cfg.base_dir = fs::current_path();
  }
  kiwi::apply_env_overrides(cfg);
  return cfg;
}

}  // namespace

extern "C" {

const char* kiwi_version(void) { return "0.1.0"; }

const char* kiwi_status_string(kiwi_status status) {
  switch (status) {
    case KIWI_OK: return "ok";
    case KIWI_E_INVALID_INPUT: return "invalid_input";
    case KIWI_E_PARSE: return "parse";
    case KIWI_E_VALIDATION: return "validation";
    case KIWI_E_CONFIG: return "config";
    case KIWI_E_IO: return "io";
    case KIWI_E_DEGENERATE_GEOMETRY: return "degenerate_geometry";
    case KIWI_E_BEHIND_CAMERA: return "behind_camera";
    case KIWI_E_TARGET_UNREACHABLE: return "target_unreachable";
    case KIWI_E_TOO_LATE: return "too_late";
    case KIWI_E_GENERATION: return "generation";
    case KIWI_E_SHUTDOWN: return "shutdown";
    case KIWI_E_INTERNAL: return "internal";
  }
  return "unknown";
}

kiwi_context* kiwi_context_create(void) { return new (std::nothrow) kiwi_context(); }

void kiwi_context_destroy(kiwi_context* ctx) { delete ctx; }

const char* kiwi_last_error(const kiwi_context* ctx) { return ctx != nullptr ? ctx->error.c_str() : ""; }

const char* kiwi_report(const kiwi_context* ctx) { return ctx != nullptr ? ctx->report.c_str() : ""; }

double kiwi_iou(const kiwi_bbox* a, const kiwi_bbox* b) {
  if (a == nullptr || b == nullptr) return 0.0;
  return kiwi::iou({a->x, a->y, a->w, a->h}, {b->x, b->y, b->w, b->h});
}

kiwi_metrics kiwi_compute_metrics(size_t tp, size_t fp, size_t fn) {
  const auto m = kiwi::compute_metrics(tp, fp, fn);
  return {m.precision, m.recall, m.f1};
}

void kiwi_rig_default(kiwi_rig* out) {
  if (out != nullptr) from_rig(kiwi::StereoRig{}, *out);
}

kiwi_status kiwi_rig_load(kiwi_context* ctx, const char* path, kiwi_rig* out) {
  return guarded(ctx, [&] {
    require(out, "out");
    from_rig(kiwi::load_rig_config(require_str(path, "path")).rig, *out);
  });
}

kiwi_status kiwi_project(kiwi_context* ctx, const kiwi_rig* rig, const double xyz[3], kiwi_camera camera,
                         double uv[2]) {
  return guarded(ctx, [&] {
    require(rig, "rig");
    require(xyz, "xyz");
    require(uv, "uv");
    const auto p = kiwi::project({xyz[0], xyz[1], xyz[2]}, to_rig(*rig),
                                 camera == KIWI_RIGHT ? kiwi::Camera::right : kiwi::Camera::left);
    uv[0] = p.x();
    uv[1] = p.y();
  });
}

kiwi_status kiwi_triangulate(kiwi_context* ctx, const kiwi_rig* rig, double u_left, double v_left, double u_right,
                             double xyz[3]) {
  return guarded(ctx, [&] {
    require(rig, "rig");
    require(xyz, "xyz");
    const auto p = kiwi::triangulate_point(u_left, v_left, u_right, to_rig(*rig));
    xyz[0] = p.x();
    xyz[1] = p.y();
    xyz[2] = p.z();
  });
}

kiwi_status kiwi_solve_fire_time(kiwi_context* ctx, const double target_xyz[3], const kiwi_vehicle* vehicle,
                                 double nozzle_x, double nozzle_y, double actuation_latency, double* fire_time) {
  return guarded(ctx, [&] {
    require(target_xyz, "target_xyz");
    require(vehicle, "vehicle");
    require(fire_time, "fire_time");
    kiwi::FlowerTarget target;
    target.position = {target_xyz[0], target_xyz[1], target_xyz[2]};
    const kiwi::VehicleState state{vehicle->v0, vehicle->a, vehicle->t0};
    const kiwi::Nozzle nozzle{0, nozzle_y, nozzle_x};
    *fire_time = kiwi::solve_fire_time(target, state, nozzle, actuation_latency);
  });
}

kiwi_detector* kiwi_detector_create(kiwi_context* ctx, const char* config_path) {
  kiwi_detector* det = nullptr;
  const auto st = guarded(ctx, [&] {
    auto d = std::make_unique<kiwi_detector>();
    if (config_path != nullptr && *config_path != '\0') d->cfg = kiwi::load_detector_config(config_path);
    det = d.release();
  });
  return st == KIWI_OK ? det : nullptr;
}

void kiwi_detector_destroy(kiwi_detector* det) { delete det; }

kiwi_status kiwi_detector_run(kiwi_context* ctx, kiwi_detector* det, const uint8_t* rgb, int width, int height,
                              size_t stride, kiwi_detections** out) {
  return guarded(ctx, [&] {
    require(det, "detector");
    require(rgb, "rgb");
    require(out, "out");
    *out = nullptr;
    if (width <= 0 || height <= 0) throw kiwi::Error(kiwi::ErrorCode::invalid_input, "frame size must be positive");
    const std::size_t row = static_cast<std::size_t>(width) * 3;
    if (stride < row) throw kiwi::Error(kiwi::ErrorCode::invalid_input, "stride is smaller than a row");
    std::vector<std::uint8_t> pixels(row * static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
      std::memcpy(pixels.data() + row * static_cast<std::size_t>(y), rgb + stride * static_cast<std::size_t>(y), row);
    }
    const kiwi::ImageFrame frame("frame", kiwi::Camera::left, width, height, 0.0, std::move(pixels));
    auto list = std::make_unique<kiwi_detections>();
    list->items = kiwi::detect_stigmas(frame, det->cfg);
    *out = list.release();
  });
}

size_t kiwi_detections_count(const kiwi_detections* list) { return list != nullptr ? list->items.size() : 0; }

kiwi_status kiwi_detections_get(const kiwi_detections* list, size_t index, kiwi_detection* out) {
  if (list == nullptr || out == nullptr || index >= list->items.size()) return KIWI_E_INVALID_INPUT;
  const auto& d = list->items[index];
  *out = {{d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h}, d.score};
  return KIWI_OK;
}

void kiwi_detections_destroy(kiwi_detections* list) { delete list; }

kiwi_status kiwi_synth(kiwi_context* ctx, const char* preset, int images, uint64_t seed, const char* rig_path,
                       const char* out_dir) {
  return guarded(ctx, [&] {
    require(ctx, "ctx");
    const auto spec = kiwi::resolve_scene_preset(require_str(preset, "preset"));
    kiwi::StereoRig rig;
    if (rig_path != nullptr && *rig_path != '\0') rig = kiwi::load_rig_config(rig_path).rig;
    const auto out = kiwi::write_synth_dataset(require_str(out_dir, "out"), spec, images, seed, rig);
    ctx->report = "images " + std::to_string(out.images) + "\ngt_left " + std::to_string(out.gt_left_boxes) +
                  "\ngt_right " + std::to_string(out.gt_right_boxes) + "\n";
  });
}

kiwi_status kiwi_detect_files(kiwi_context* ctx, const char* images_dir, const char* config_path,
                              const char* out_jsonl) {
  return guarded(ctx, [&] {
    require(ctx, "ctx");
    const fs::path dir = require_str(images_dir, "images");
    const fs::path out = require_str(out_jsonl, "out");
    kiwi::DetectorConfig cfg;
    if (config_path != nullptr && *config_path != '\0') cfg = kiwi::load_detector_config(config_path);
    if (!fs::is_directory(dir)) throw kiwi::Error(kiwi::ErrorCode::io, "not a directory: " + dir.string());

    std::vector<kiwi::Detection> all;
    if (fs::exists(dir / "frames.csv")) {
      for (const auto& ref : kiwi::load_frame_dir(dir)) {
        auto dets = kiwi::detect_stigmas(*ref.load(), cfg);
        all.insert(all.end(), dets.begin(), dets.end());
      }
    } else {
      std::vector<fs::path> files;
      for (const auto& root : {dir, dir / "images"}) {
        if (!fs::is_directory(root)) continue;
        for (const auto& e : fs::directory_iterator(root)) {
          if (e.is_regular_file() && is_image(e.path())) files.push_back(e.path());
        }
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        const std::string id = f.stem().string();
        const auto cam = id.ends_with("_R") ? kiwi::Camera::right : kiwi::Camera::left;
        auto frame = kiwi::read_image(f, cam);
        frame.image_id = id;
        auto dets = kiwi::detect_stigmas(frame, cfg);
        all.insert(all.end(), dets.begin(), dets.end());
      }
    }
    kiwi::write_detections(out, all);
    ctx->report = "detections " + std::to_string(all.size()) + "\n";
  });
}

kiwi_status kiwi_emulate_file(kiwi_context* ctx, const char* gt_jsonl, const char* profile, uint64_t seed,
                              const char* out_jsonl) {
  return guarded(ctx, [&] {
    require(ctx, "ctx");
    const auto prof = kiwi::resolve_profile(require_str(profile, "profile"));
    const auto gt = kiwi::read_detections(require_str(gt_jsonl, "gt"));
    const auto dets = kiwi::emulate(gt, prof, seed);
    kiwi::write_detections(require_str(out_jsonl, "out"), dets);
    ctx->report = "detections " + std::to_string(dets.size()) + "\nlatency_ms " + std::to_string(prof.latency_ms) + "\n";
  });
}

kiwi_status kiwi_triangulate_files(kiwi_context* ctx, const char* left_jsonl, const char* right_jsonl,
                                   const char* rig_path, const char* frames_csv, const char* out_jsonl) {
  return guarded(ctx, [&] {
    require(ctx, "ctx");
    const auto left = kiwi::read_detections(require_str(left_jsonl, "left"));
    const auto right = kiwi::read_detections(require_str(right_jsonl, "right"));
    kiwi::RigConfig rc;
    if (rig_path != nullptr && *rig_path != '\0') rc = kiwi::load_rig_config(rig_path);
    std::map<std::string, double> times;
    if (frames_csv != nullptr && *frames_csv != '\0') times = frame_times(frames_csv);

    std::map<std::string, std::pair<std::vector<kiwi::Detection>, std::vector<kiwi::Detection>>> pairs;
    for (const auto& d : left) pairs[pair_id(d.image_id)].first.push_back(d);
    for (const auto& d : right) pairs[pair_id(d.image_id)].second.push_back(d);

    std::string text;
    std::size_t points = 0;
    for (const auto& [id, views] : pairs) {
      const auto it = times.find(id);
      const double t = it != times.end() ? it->second : 0.0;
      const auto match = kiwi::match_stereo(views.first, views.second, rc.rig);
      for (const auto& p : match.pairs) {
        auto target = kiwi::triangulate(p, rc.rig, t);
        if (rc.has_extrinsic) target = kiwi::to_vehicle_frame(target, rc.extrinsic);
        text += kiwi::to_points_jsonl(id, target);
        text += '\n';
        ++points;
      }
    }
    kiwi::write_text_file(require_str(out_jsonl, "out"), text);
    ctx->report = "points " + std::to_string(points) + "\n";
  });
}

kiwi_status kiwi_schedule_file(kiwi_context* ctx, const char* points_jsonl, const char* vehicle,
                               const char* nozzles_path, const char* out_jsonl) {
  return guarded(ctx, [&] {
    require(ctx, "ctx");
    const auto state = kiwi::parse_vehicle_state(require_str(vehicle, "vehicle"));
    const auto nozzles = kiwi::load_nozzle_config(require_str(nozzles_path, "nozzles"));
    std::vector<kiwi::FlowerTarget> targets;
    for (auto& rec : kiwi::read_points(require_str(points_jsonl, "points"))) targets.push_back(std::move(rec.target));
    const auto plan = kiwi::plan_spray(targets, state, nozzles);
    std::string text;
    for (const auto& c : plan.commands) text += kiwi::to_spray_jsonl(c) + "\n";
    for (const auto& m : plan.misses) text += kiwi::to_spray_jsonl(m) + "\n";
    kiwi::write_text_file(require_str(out_jsonl, "out"), text);
    ctx->report = "commands " + std::to_string(plan.commands.size()) + "\nmisses " +
                  std::to_string(plan.misses.size()) + "\n";
  });
}

kiwi_status kiwi_evaluate_files(kiwi_context* ctx, const char* gt_jsonl, const char* pred_jsonl,
                                const char* manifest_csv, double iou, double score_min, const char* out_report,
                                const char* confusion_csv) {
  return guarded(ctx, [&] {
    require(ctx, "ctx");
    kiwi::EvalConfig cfg;
    cfg.iou_threshold = iou;
    cfg.score_min = score_min;
    std::optional<fs::path> manifest;
    if (manifest_csv != nullptr && *manifest_csv != '\0') {
      manifest = manifest_csv;
    } else {
      cfg.group_key = kiwi::GroupKey::none;
    }
    cfg.validate();
    const auto report = kiwi::evaluate_files(require_str(pred_jsonl, "pred"), require_str(gt_jsonl, "gt"), manifest, cfg);
    const auto text = kiwi::render_report(report, fs::path(pred_jsonl).stem().string());
    if (out_report != nullptr && *out_report != '\0') kiwi::write_text_file(out_report, text);
    if (confusion_csv != nullptr && *confusion_csv != '\0') {
      kiwi::write_text_file(confusion_csv, kiwi::confusion_summary(report));
    }
    ctx->report = text;
  });
}

kiwi_status kiwi_pipeline(kiwi_context* ctx, const char* frames, const char* config_path, const char* out_dir) {
  return guarded(ctx, [&] {
    require(ctx, "ctx");
    const std::string source = require_str(frames, "frames");
    const fs::path out = require_str(out_dir, "out");
    auto cfg = pipeline_config(config_path);
    if (cfg.log.out_dir.empty()) cfg.log.out_dir = out / "logs";
    const auto setup = kiwi::resolve_setup(cfg);

    std::vector<kiwi::FrameRef> refs;
    if (fs::is_directory(source)) {
      refs = kiwi::load_frame_dir(source);
    } else {
      const auto spec = kiwi::resolve_scene_preset(source);
      refs = kiwi::synth_drive(spec, setup.rig, cfg.vehicle, cfg.synth_frames, cfg.synth_seed).frames;
    }
    const auto result = kiwi::run_pipeline(refs, cfg);
    kiwi::write_pipeline_outputs(out, result);
    ctx->report = kiwi::format_stats_text(result.stats);
  });
}

kiwi_status kiwi_bench(kiwi_context* ctx, const char* config_path, int frames, const char* out_dir,
                       int* budget_pass) {
  return guarded(ctx, [&] {
    require(ctx, "ctx");
    if (frames < 0) throw kiwi::Error(kiwi::ErrorCode::invalid_input, "frame count must be >= 0");
    auto cfg = pipeline_config(config_path);
    // Logging stays on only when a destination was configured.
    const auto report = kiwi::bench(cfg, frames);
    if (out_dir != nullptr && *out_dir != '\0') {
      fs::create_directories(out_dir);
      kiwi::write_text_file(fs::path(out_dir) / "bench.txt", report.text);
      kiwi::write_text_file(fs::path(out_dir) / "bench.kv", report.kv);
    }
    if (budget_pass != nullptr) *budget_pass = report.budget_pass ? 1 : 0;
    ctx->report = report.text;
  });
}

}  // extern "C"
