#ifndef KIWI_KIWI_H
#define KIWI_KIWI_H

/* C interface to the kiwi flower-detection and spraying library.
 *
 * Every fallible call returns a kiwi_status and records a message in the
 * context it was given; kiwi_last_error() returns it until the next call on
 * that context. A context is not thread-safe; use one per thread. Strings
 * returned by the library stay valid until the next call on the same
 * context or handle. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define KIWI_API __declspec(dllexport)
#else
#define KIWI_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum kiwi_status {
  KIWI_OK = 0,
  KIWI_E_INVALID_INPUT = 1,
  KIWI_E_PARSE = 2,
  KIWI_E_VALIDATION = 3,
  KIWI_E_CONFIG = 4,
  KIWI_E_IO = 5,
  KIWI_E_DEGENERATE_GEOMETRY = 6,
  KIWI_E_BEHIND_CAMERA = 7,
  KIWI_E_TARGET_UNREACHABLE = 8,
  KIWI_E_TOO_LATE = 9,
  KIWI_E_GENERATION = 10,
  KIWI_E_SHUTDOWN = 11,
  KIWI_E_INTERNAL = 99
} kiwi_status;

typedef enum kiwi_camera { KIWI_LEFT = 0, KIWI_RIGHT = 1 } kiwi_camera;

typedef struct kiwi_context kiwi_context;
typedef struct kiwi_detector kiwi_detector;
typedef struct kiwi_detections kiwi_detections;

typedef struct kiwi_bbox {
  double x, y, w, h;
} kiwi_bbox;

typedef struct kiwi_detection {
  kiwi_bbox bbox;
  double score;
} kiwi_detection;

typedef struct kiwi_metrics {
  double precision, recall, f1;
} kiwi_metrics;

typedef struct kiwi_rig {
  double focal_px, baseline_m, cx, cy;
  int width, height;
  double eps_row_px, d_min, d_max;
} kiwi_rig;

typedef struct kiwi_vehicle {
  double v0, a, t0;
} kiwi_vehicle;

KIWI_API const char* kiwi_version(void);
KIWI_API const char* kiwi_status_string(kiwi_status status);

KIWI_API kiwi_context* kiwi_context_create(void);
KIWI_API void kiwi_context_destroy(kiwi_context* ctx);
KIWI_API const char* kiwi_last_error(const kiwi_context* ctx);
/* Human-readable output of the last evaluate / pipeline / bench call. */
KIWI_API const char* kiwi_report(const kiwi_context* ctx);

/* Geometry and metrics */
KIWI_API double kiwi_iou(const kiwi_bbox* a, const kiwi_bbox* b);
KIWI_API kiwi_metrics kiwi_compute_metrics(size_t tp, size_t fp, size_t fn);

KIWI_API void kiwi_rig_default(kiwi_rig* out);
KIWI_API kiwi_status kiwi_rig_load(kiwi_context* ctx, const char* path, kiwi_rig* out);
KIWI_API kiwi_status kiwi_project(kiwi_context* ctx, const kiwi_rig* rig, const double xyz[3], kiwi_camera camera,
                                  double uv[2]);
KIWI_API kiwi_status kiwi_triangulate(kiwi_context* ctx, const kiwi_rig* rig, double u_left, double v_left,
                                      double u_right, double xyz[3]);

/* Fire time for a nozzle at (nozzle_x, nozzle_y) and a vehicle-frame target. */
KIWI_API kiwi_status kiwi_solve_fire_time(kiwi_context* ctx, const double target_xyz[3], const kiwi_vehicle* vehicle,
                                          double nozzle_x, double nozzle_y, double actuation_latency,
                                          double* fire_time);

/* Classical detector. config_path may be NULL for defaults. */
KIWI_API kiwi_detector* kiwi_detector_create(kiwi_context* ctx, const char* config_path);
KIWI_API void kiwi_detector_destroy(kiwi_detector* det);
/* Packed RGB, 3 bytes per pixel, `stride` bytes per row. */
KIWI_API kiwi_status kiwi_detector_run(kiwi_context* ctx, kiwi_detector* det, const uint8_t* rgb, int width,
                                       int height, size_t stride, kiwi_detections** out);
KIWI_API size_t kiwi_detections_count(const kiwi_detections* list);
KIWI_API kiwi_status kiwi_detections_get(const kiwi_detections* list, size_t index, kiwi_detection* out);
KIWI_API void kiwi_detections_destroy(kiwi_detections* list);

/* File-level operations. Optional paths may be NULL. */
KIWI_API kiwi_status kiwi_synth(kiwi_context* ctx, const char* preset, int images, uint64_t seed,
                                const char* rig_path, const char* out_dir);
KIWI_API kiwi_status kiwi_detect_files(kiwi_context* ctx, const char* images_dir, const char* config_path,
                                       const char* out_jsonl);
KIWI_API kiwi_status kiwi_emulate_file(kiwi_context* ctx, const char* gt_jsonl, const char* profile, uint64_t seed,
                                       const char* out_jsonl);
KIWI_API kiwi_status kiwi_triangulate_files(kiwi_context* ctx, const char* left_jsonl, const char* right_jsonl,
                                            const char* rig_path, const char* frames_csv, const char* out_jsonl);
/* vehicle: "v=<f>,a=<f>,t0=<f>" */
KIWI_API kiwi_status kiwi_schedule_file(kiwi_context* ctx, const char* points_jsonl, const char* vehicle,
                                        const char* nozzles_path, const char* out_jsonl);
KIWI_API kiwi_status kiwi_evaluate_files(kiwi_context* ctx, const char* gt_jsonl, const char* pred_jsonl,
                                         const char* manifest_csv, double iou, double score_min,
                                         const char* out_report, const char* confusion_csv);
/* frames: a directory or a synthetic preset name. Honors KIWI_WORKERS and
 * KIWI_LOG_DIR. */
KIWI_API kiwi_status kiwi_pipeline(kiwi_context* ctx, const char* frames, const char* config_path,
                                   const char* out_dir);
/* budget_pass receives 1 when the run met the capture rate. out_dir, when
 * given, receives bench.txt and bench.kv. */
KIWI_API kiwi_status kiwi_bench(kiwi_context* ctx, const char* config_path, int frames, const char* out_dir,
                                int* budget_pass);

#ifdef __cplusplus
}
#endif

#endif /* KIWI_KIWI_H */
