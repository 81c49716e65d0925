// kiwi: command-line front end over the C library.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>

#include <CLI11.hpp>

#include "kiwi/kiwi.h"

namespace {

using Context = std::unique_ptr<kiwi_context, decltype(&kiwi_context_destroy)>;

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

int finish(kiwi_context* ctx, kiwi_status st, bool print_report) {
  if (st != KIWI_OK) {
    std::fprintf(stderr, "kiwi: error (%s): %s\n", kiwi_status_string(st), kiwi_last_error(ctx));
    return 1;
  }
  if (print_report) std::fputs(kiwi_report(ctx), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kiwifruit flower detection, stereo localization and spray scheduling"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kiwi_version());

  // synth
  std::string preset, rig, out;
  int images = 0;
  std::uint64_t seed = 0;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic stereo dataset");
  synth->add_option("--preset", preset, "A, B1, B2, B3 or custom:<cfg>")->required();
  synth->add_option("--images", images, "Number of stereo pairs")->required()->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", seed, "Generator seed")->required();
  synth->add_option("--rig", rig, "Rig config")->check(CLI::ExistingFile);
  synth->add_option("--out", out, "Output directory")->required();

  // detect
  std::string images_dir, config;
  auto* detect = app.add_subcommand("detect", "Run the classical detector over a directory of images");
  detect->add_option("--images", images_dir, "Image directory")->required()->check(CLI::ExistingDirectory);
  detect->add_option("--config", config, "Detector config")->check(CLI::ExistingFile);
  detect->add_option("--out", out, "Detections JSONL")->required();

  // emulate
  std::string gt, profile;
  auto* emulate = app.add_subcommand("emulate", "Emulate a trained detector from ground truth");
  emulate->add_option("--gt", gt, "Ground-truth JSONL")->required()->check(CLI::ExistingFile);
  emulate->add_option("--profile", profile, "nas, frcnn_iv2, ssd_iv2 or file:<cfg>")->required();
  emulate->add_option("--seed", seed, "Emulation seed")->required();
  emulate->add_option("--out", out, "Detections JSONL")->required();

  // triangulate
  std::string left, right, frames_csv;
  auto* tri = app.add_subcommand("triangulate", "Match stereo detections and triangulate");
  tri->add_option("--left", left, "Left-view detections")->required()->check(CLI::ExistingFile);
  tri->add_option("--right", right, "Right-view detections")->required()->check(CLI::ExistingFile);
  tri->add_option("--rig", rig, "Rig config")->required()->check(CLI::ExistingFile);
  tri->add_option("--frames", frames_csv, "frames.csv with capture timestamps")->check(CLI::ExistingFile);
  tri->add_option("--out", out, "Points JSONL")->required();

  // schedule
  std::string points, vehicle, nozzles;
  auto* sched = app.add_subcommand("schedule", "Plan spray commands for triangulated targets");
  sched->add_option("--points", points, "Points JSONL")->required()->check(CLI::ExistingFile);
  sched->add_option("--vehicle", vehicle, "v=<f>,a=<f>,t0=<f>")->required();
  sched->add_option("--nozzles", nozzles, "Nozzle config")->required()->check(CLI::ExistingFile);
  sched->add_option("--out", out, "Spray JSONL")->required();

  // evaluate
  std::string pred, manifest, confusion;
  double iou = 0.5, score_min = 0.5;
  auto* eval = app.add_subcommand("evaluate", "Score predictions against ground truth");
  eval->add_option("--gt", gt, "Ground-truth JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--pred", pred, "Prediction JSONL")->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", manifest, "image_id,dataset CSV")->check(CLI::ExistingFile);
  eval->add_option("--iou", iou, "IoU threshold")->capture_default_str();
  eval->add_option("--score-min", score_min, "Minimum prediction score")->capture_default_str();
  eval->add_option("--out", out, "Report file");
  eval->add_option("--confusion", confusion, "Per-group tp,fp,fn CSV");

  // pipeline
  std::string frames;
  auto* pipe = app.add_subcommand("pipeline", "Run the end-to-end pipeline");
  pipe->add_option("--frames", frames, "Frame directory or synthetic preset")->required();
  pipe->add_option("--config", config, "Pipeline config")->check(CLI::ExistingFile);
  pipe->add_option("--out", out, "Output directory")->required();

  // bench
  int n_frames = 0;
  auto* bench = app.add_subcommand("bench", "Measure sustained pipeline throughput");
  bench->add_option("--config", config, "Pipeline config")->check(CLI::ExistingFile);
  bench->add_option("--frames", n_frames, "Stereo pairs to process")->required()->check(CLI::NonNegativeNumber);
  bench->add_option("--out", out, "Directory for bench.txt and bench.kv");

  CLI11_PARSE(app, argc, argv);

  Context ctx(kiwi_context_create(), &kiwi_context_destroy);
  if (!ctx) {
    std::fputs("kiwi: out of memory\n", stderr);
    return 1;
  }
  kiwi_context* c = ctx.get();

  if (*synth) return finish(c, kiwi_synth(c, preset.c_str(), images, seed, opt(rig), out.c_str()), true);
  if (*detect) return finish(c, kiwi_detect_files(c, images_dir.c_str(), opt(config), out.c_str()), true);
  if (*emulate) return finish(c, kiwi_emulate_file(c, gt.c_str(), profile.c_str(), seed, out.c_str()), true);
  if (*tri) {
    return finish(c, kiwi_triangulate_files(c, left.c_str(), right.c_str(), rig.c_str(), opt(frames_csv), out.c_str()),
                  true);
  }
  if (*sched) {
    return finish(c, kiwi_schedule_file(c, points.c_str(), vehicle.c_str(), nozzles.c_str(), out.c_str()), true);
  }
  if (*eval) {
    return finish(c,
                  kiwi_evaluate_files(c, gt.c_str(), pred.c_str(), opt(manifest), iou, score_min, opt(out),
                                      opt(confusion)),
                  true);
  }
  if (*pipe) return finish(c, kiwi_pipeline(c, frames.c_str(), opt(config), out.c_str()), true);
  if (*bench) {
    int pass = 0;
    return finish(c, kiwi_bench(c, opt(config), n_frames, opt(out), &pass), true);
  }
  return 1;
}
