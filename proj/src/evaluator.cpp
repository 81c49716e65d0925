#include "kiwi/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

namespace kiwi {

void EvalConfig::validate() const {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw Error(ErrorCode::config, "iou_threshold must lie in (0,1]");
  }
  if (!(score_min >= 0.0 && score_min <= 1.0)) throw Error(ErrorCode::config, "score_min must lie in [0,1]");
}

MatchResult match_image(std::span<const Detection> preds, std::span<const Detection> gts, double iou_threshold) {
  const std::string* id = nullptr;
  for (const auto* list : {&preds, &gts}) {
    for (const auto& d : *list) {
      if (id == nullptr) {
        id = &d.image_id;
      } else if (d.image_id != *id) {
        throw Error(ErrorCode::invalid_input, "match_image: records from '" + *id + "' and '" + d.image_id + "'");
      }
    }
  }

  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });

  MatchResult out;
  std::vector<char> taken(gts.size(), 0);
  for (auto p : order) {
    std::size_t best = gts.size();
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(preds[p].bbox, gts[g].bbox);
      if (v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best < gts.size() && best_iou >= iou_threshold) {
      taken[best] = 1;
      out.tp_pairs.emplace_back(p, best);
    } else {
      out.fp_preds.push_back(p);
    }
  }
  for (std::size_t g = 0; g < gts.size(); ++g) {
    if (!taken[g]) out.fn_gts.push_back(g);
  }
  return out;
}

Metrics compute_metrics(std::size_t tp, std::size_t fp, std::size_t fn) {
  Metrics m;
  const auto t = static_cast<double>(tp);
  if (tp + fp > 0) m.precision = t / static_cast<double>(tp + fp);
  if (tp + fn > 0) m.recall = t / static_cast<double>(tp + fn);
  if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  return m;
}

EvalReport evaluate(std::span<const Detection> preds, std::span<const Detection> gts,
                    const std::optional<Manifest>& manifest, const EvalConfig& cfg) {
  cfg.validate();

  // Image universe and group assignment.
  std::vector<std::string> group_order;
  std::unordered_map<std::string, std::string> group_of;
  if (manifest) {
    for (const auto& [image, group] : *manifest) {
      group_of.emplace(image, cfg.group_key == GroupKey::dataset ? group : std::string("overall"));
      if (std::find(group_order.begin(), group_order.end(), group_of[image]) == group_order.end()) {
        group_order.push_back(group_of[image]);
      }
    }
    for (const auto* list : {&preds, &gts}) {
      for (const auto& d : *list) {
        if (!group_of.contains(d.image_id)) {
          throw Error(ErrorCode::validation, "image '" + d.image_id + "' is not listed in the manifest");
        }
      }
    }
  } else {
    std::set<std::string, std::less<>> gt_images;
    for (const auto& g : gts) gt_images.insert(g.image_id);
    for (const auto& p : preds) {
      if (!gt_images.contains(p.image_id)) {
        throw Error(ErrorCode::validation, "prediction for '" + p.image_id + "' has no ground-truth image");
      }
    }
    for (const auto& g : gts) group_of.emplace(g.image_id, "overall");
    if (!gts.empty()) group_order.push_back("overall");
  }

  std::map<std::string, std::pair<std::vector<Detection>, std::vector<Detection>>, std::less<>> by_image;
  for (const auto& p : preds) {
    if (p.score >= cfg.score_min) by_image[p.image_id].first.push_back(p);
  }
  for (const auto& g : gts) by_image[g.image_id].second.push_back(g);

  std::map<std::string, Tally, std::less<>> tallies;
  for (const auto& [image, lists] : by_image) {
    const auto m = match_image(lists.first, lists.second, cfg.iou_threshold);
    tallies[group_of.at(image)] += Tally{m.tp_pairs.size(), m.fp_preds.size(), m.fn_gts.size()};
  }

  EvalReport report;
  report.config = cfg;
  const bool grouped = cfg.group_key == GroupKey::dataset && manifest.has_value();
  for (const auto& name : group_order) {
    Tally t = tallies.contains(name) ? tallies.at(name) : Tally{};
    report.overall.tally += t;
    if (grouped) report.groups.push_back({name, t, compute_metrics(t.tp, t.fp, t.fn)});
  }
  if (!grouped && !group_order.empty()) {
    report.groups.push_back({"overall", report.overall.tally, {}});
    report.groups.back().metrics = compute_metrics(report.overall.tally.tp, report.overall.tally.fp, report.overall.tally.fn);
  }
  const auto& o = report.overall.tally;
  report.overall.metrics = compute_metrics(o.tp, o.fp, o.fn);
  return report;
}

EvalReport evaluate_files(const std::filesystem::path& preds_path, const std::filesystem::path& gt_path,
                          const std::optional<std::filesystem::path>& manifest_path, const EvalConfig& cfg) {
  const auto preds = read_detections(preds_path);
  const auto gts = read_detections(gt_path);
  std::optional<Manifest> manifest;
  if (manifest_path) manifest = read_manifest(*manifest_path);
  return evaluate(preds, gts, manifest, cfg);
}

namespace {

std::string format_row(std::string_view model, std::string_view name, const Tally& t, const Metrics& m,
                       bool with_model) {
  char buf[256];
  if (with_model) {
    std::snprintf(buf, sizeof buf, "%-28.28s %-10.10s %7zu %7zu %7zu %9.3f %7.3f %8.3f\n", std::string(model).c_str(),
                  std::string(name).c_str(), t.tp, t.fp, t.fn, m.precision, m.recall, m.f1);
  } else {
    std::snprintf(buf, sizeof buf, "%-10.10s %7zu %7zu %7zu %9.3f %7.3f %8.3f\n", std::string(name).c_str(), t.tp,
                  t.fp, t.fn, m.precision, m.recall, m.f1);
  }
  return buf;
}

}  // namespace

std::string render_report(const EvalReport& report, std::string_view model) {
  const bool with_model = !model.empty();
  char header[512];
  std::snprintf(header, sizeof header,
                "# matching: greedy by descending score, each prediction takes the unmatched ground truth "
                "with highest IoU; IoU >= %.3f, score >= %.3f\n",
                report.config.iou_threshold, report.config.score_min);
  std::string out = header;
  char cols[256];
  if (with_model) {
    std::snprintf(cols, sizeof cols, "%-28s %-10s %7s %7s %7s %9s %7s %8s\n", "Model", "Dataset", "TP", "FP", "FN",
                  "Precision", "Recall", "F1 Score");
  } else {
    std::snprintf(cols, sizeof cols, "%-10s %7s %7s %7s %9s %7s %8s\n", "Dataset", "TP", "FP", "FN", "Precision",
                  "Recall", "F1 Score");
  }
  out += cols;
  for (const auto& g : report.groups) {
    if (g.name == "overall") continue;
    out += format_row(model, g.name, g.tally, g.metrics, with_model);
  }
  out += format_row(model, "overall", report.overall.tally, report.overall.metrics, with_model);
  return out;
}

std::string confusion_summary(const EvalReport& report) {
  std::string out = "group,tp,fp,fn\n";
  for (const auto& g : report.groups) {
    out += g.name + "," + std::to_string(g.tally.tp) + "," + std::to_string(g.tally.fp) + "," +
           std::to_string(g.tally.fn) + "\n";
  }
  return out;
}

}  // namespace kiwi
