#pragma once

// IoU-thresholded detection scoring: greedy per-image matching, TP/FP/FN
// tallies and precision/recall/F1 per dataset group plus an overall row.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kiwi/core.hpp"
#include "kiwi/jsonl.hpp"

namespace kiwi {

enum class GroupKey { none, dataset };

struct EvalConfig {
  double iou_threshold = 0.5;
  double score_min = 0.5;  // predictions below are discarded before matching
  GroupKey group_key = GroupKey::dataset;

  void validate() const;
};

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> tp_pairs;  // (pred index, gt index)
  std::vector<std::size_t> fp_preds;
  std::vector<std::size_t> fn_gts;
};

// Predictions are visited by descending score (ties keep input order); each
// takes the unmatched ground-truth box with the highest IoU when that IoU
// reaches the threshold. Throws Error(invalid_input) on mixed image ids.
MatchResult match_image(std::span<const Detection> preds, std::span<const Detection> gts, double iou_threshold);

struct Tally {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  Tally& operator+=(const Tally& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Zero denominators give 0; f1 = 2PR/(P+R).
Metrics compute_metrics(std::size_t tp, std::size_t fp, std::size_t fn);

struct GroupRow {
  std::string name;
  Tally tally;
  Metrics metrics;
};

struct EvalReport {
  EvalConfig config;
  std::vector<GroupRow> groups;  // manifest order
  GroupRow overall{"overall", {}, {}};
};

// In-memory evaluation. With a manifest, every image id must be listed in
// it; without one, every prediction's image must occur in the ground truth.
EvalReport evaluate(std::span<const Detection> preds, std::span<const Detection> gts,
                    const std::optional<Manifest>& manifest, const EvalConfig& cfg);

EvalReport evaluate_files(const std::filesystem::path& preds_path, const std::filesystem::path& gt_path,
                          const std::optional<std::filesystem::path>& manifest_path, const EvalConfig& cfg);

// Fixed-width table, metrics to three decimals, one row per group then "overall".
std::string render_report(const EvalReport& report, std::string_view model = {});

// "group,tp,fp,fn" header plus one row per group.
std::string confusion_summary(const EvalReport& report);

}  // namespace kiwi
