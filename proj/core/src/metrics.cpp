#include "nsod/metrics.hpp"

#include "nsod/access_log.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace nsod {

using nlohmann::json;

MetricsReport finalize_report(MetricsReport report) {
  double sum = 0.0;
  int defined = 0;
  for (std::size_t j = 0; j < report.per_class.size(); ++j) {
    if (report.class_defined.empty() || report.class_defined[j]) {
      sum += report.per_class[j];
      ++defined;
    }
  }
  report.mean = defined > 0 ? sum / defined : 0.0;
  return report;
}

namespace {

bool detection_rank_less(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  if (!(a.box == b.box)) return box_less(a.box, b.box);
  return a.image_id < b.image_id;
}

}  // namespace

MetricsReport detection_map(
    const std::vector<Detection>& detections,
    const std::map<std::string, std::vector<GtInstance>>& gt,
    const ClassCatalog& catalog, double iou_threshold) {
  const int C = catalog.size();
  for (const auto& d : detections) {
    if (d.class_index < 0 || d.class_index >= C)
      throw ValidationError("detection_map: detection class " +
                            std::to_string(d.class_index) +
                            " is not in the catalog");
  }

  MetricsReport report;
  report.metric = "detection_map";
  report.class_names = catalog.names;
  report.per_class.assign(C, 0.0);
  report.class_defined.assign(C, true);

  for (int j = 0; j < C; ++j) {
    // Ranked detections of class j and unmatched-flag per GT instance.
    std::vector<Detection> ranked;
    for (const auto& d : detections) {
      if (d.class_index == j) ranked.push_back(d);
    }
    std::sort(ranked.begin(), ranked.end(), detection_rank_less);

    std::map<std::string, std::vector<bool>> matched;
    int total_gt = 0;
    for (const auto& [id, instances] : gt) {
      int count = 0;
      for (const auto& inst : instances) count += inst.class_index == j;
      matched[id].assign(instances.size(), false);
      total_gt += count;
    }
    if (total_gt == 0) {
      // No instances of this class anywhere: AP is 0 by convention unless
      // there are also no detections, in which case the class is vacuous.
      report.per_class[j] = 0.0;
      if (!ranked.empty())
        report.warnings.push_back("class '" + catalog.names[j] +
                                  "' has detections but no ground truth");
      continue;
    }

    int tp = 0, fp = 0;
    std::vector<double> precision, recall;
    for (const auto& d : ranked) {
      auto git = gt.find(d.image_id);
      int best = -1;
      double best_iou = 0.0;
      if (git != gt.end()) {
        const auto& instances = git->second;
        auto& m = matched[d.image_id];
        for (std::size_t t = 0; t < instances.size(); ++t) {
          if (instances[t].class_index != j || m[t]) continue;
          const double v = iou(d.box, instances[t].box);
          if (v >= iou_threshold && v > best_iou) {
            best_iou = v;
            best = static_cast<int>(t);
          }
        }
      }
      if (best >= 0) {
        matched[d.image_id][best] = true;
        ++tp;
      } else {
        ++fp;
      }
      precision.push_back(static_cast<double>(tp) / (tp + fp));
      recall.push_back(static_cast<double>(tp) / total_gt);
    }

    // 11-point interpolated AP.
    double ap = 0.0;
    for (int t = 0; t <= 10; ++t) {
      const double level = t / 10.0;
      double best_prec = 0.0;
      for (std::size_t r = 0; r < recall.size(); ++r) {
        if (recall[r] >= level) best_prec = std::max(best_prec, precision[r]);
      }
      ap += best_prec;
    }
    report.per_class[j] = ap / 11.0;
  }
  return finalize_report(std::move(report));
}

MetricsReport corloc(const std::vector<Detection>& detections,
                     const std::map<std::string, std::vector<GtInstance>>& gt,
                     const ClassCatalog& catalog, double iou_threshold) {
  const int C = catalog.size();
  MetricsReport report;
  report.metric = "corloc";
  report.class_names = catalog.names;
  report.per_class.assign(C, 0.0);
  report.class_defined.assign(C, false);

  // Top detection per (image, class).
  std::map<std::pair<std::string, int>, const Detection*> top;
  for (const auto& d : detections) {
    auto key = std::make_pair(d.image_id, d.class_index);
    auto it = top.find(key);
    if (it == top.end() || detection_rank_less(d, *it->second)) {
      top[key] = &d;
    }
  }

  std::vector<int> images_with(C, 0), localized(C, 0);
  for (const auto& [id, instances] : gt) {
    std::set<int> present;
    for (const auto& inst : instances) present.insert(inst.class_index);
    for (int j : present) {
      if (j < 0 || j >= C) continue;
      ++images_with[j];
      auto it = top.find({id, j});
      if (it == top.end()) continue;
      for (const auto& inst : instances) {
        if (inst.class_index == j &&
            iou(it->second->box, inst.box) >= iou_threshold) {
          ++localized[j];
          break;
        }
      }
    }
  }
  for (int j = 0; j < C; ++j) {
    if (images_with[j] > 0) {
      report.class_defined[j] = true;
      report.per_class[j] =
          static_cast<double>(localized[j]) / images_with[j];
    } else {
      report.warnings.push_back("class '" + catalog.names[j] +
                                "' appears in no image; excluded from CorLoc");
    }
  }
  return finalize_report(std::move(report));
}

MetricsReport classification_map(const std::vector<std::string>& image_ids,
                                 const std::vector<ClassScoreVector>& scores,
                                 const std::vector<std::vector<int>>& gt_labels,
                                 const ClassCatalog& catalog) {
  const int C = catalog.size();
  const std::size_t n = image_ids.size();
  if (scores.size() != n || gt_labels.size() != n)
    throw ValidationError("classification_map: input length mismatch");

  MetricsReport report;
  report.metric = "classification_map";
  report.class_names = catalog.names;
  report.per_class.assign(C, 0.0);
  report.class_defined.assign(C, true);

  for (int j = 0; j < C; ++j) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (scores[a][j] != scores[b][j]) return scores[a][j] > scores[b][j];
      return image_ids[a] < image_ids[b];  // deterministic tie order
    });
    int positives_total = 0;
    for (std::size_t i = 0; i < n; ++i) positives_total += gt_labels[i][j];
    if (positives_total == 0) {
      report.class_defined[j] = false;
      report.warnings.push_back("class '" + catalog.names[j] +
                                "' has zero positive images; AP undefined");
      continue;
    }
    // Non-interpolated AP: mean precision at each positive's rank.
    int tp = 0;
    double ap = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (gt_labels[order[r]][j]) {
        ++tp;
        ap += static_cast<double>(tp) / static_cast<double>(r + 1);
      }
    }
    report.per_class[j] = ap / positives_total;
  }
  return finalize_report(std::move(report));
}

MetricsReport top1_macc(const std::vector<std::string>& image_ids,
                        const std::vector<int>& predictions,
                        const std::vector<std::vector<int>>& gt_labels,
                        const ClassCatalog& catalog) {
  const int C = catalog.size();
  const std::size_t n = image_ids.size();
  if (predictions.size() != n || gt_labels.size() != n)
    throw ValidationError("top1_macc: input length mismatch");

  MetricsReport report;
  report.metric = "top1_macc";
  report.class_names = catalog.names;
  report.per_class.assign(C, 0.0);
  report.class_defined.assign(C, false);

  std::vector<int> counted(C, 0), correct(C, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const bool hit = predictions[i] >= 0 && predictions[i] < C &&
                     gt_labels[i][predictions[i]] == 1;
    for (int j = 0; j < C; ++j) {
      if (!gt_labels[i][j]) continue;
      ++counted[j];
      correct[j] += hit ? 1 : 0;
    }
  }
  for (int j = 0; j < C; ++j) {
    if (counted[j] > 0) {
      report.class_defined[j] = true;
      report.per_class[j] = static_cast<double>(correct[j]) / counted[j];
    } else {
      report.warnings.push_back("class '" + catalog.names[j] +
                                "' appears in no image; excluded from mAcc");
    }
  }
  return finalize_report(std::move(report));
}

double proposal_recall(const std::map<std::string, std::vector<Box>>& proposals,
                       const std::map<std::string, std::vector<GtInstance>>& gt,
                       double iou_threshold) {
  std::int64_t total = 0, covered = 0;
  for (const auto& [id, instances] : gt) {
    const auto pit = proposals.find(id);
    for (const auto& inst : instances) {
      ++total;
      if (pit == proposals.end()) continue;
      for (const auto& box : pit->second) {
        if (iou(box, inst.box) >= iou_threshold) {
          ++covered;
          break;
        }
      }
    }
  }
  if (total == 0) return 0.0;
  return static_cast<double>(covered) / static_cast<double>(total);
}

std::vector<std::vector<int>> multi_labels_from_gt(
    const std::vector<std::string>& image_ids,
    const std::map<std::string, std::vector<GtInstance>>& gt, int classes) {
  std::vector<std::vector<int>> labels(image_ids.size(),
                                       std::vector<int>(classes, 0));
  for (std::size_t i = 0; i < image_ids.size(); ++i) {
    const auto it = gt.find(image_ids[i]);
    if (it == gt.end()) continue;
    for (const auto& inst : it->second) {
      if (inst.class_index >= 0 && inst.class_index < classes)
        labels[i][inst.class_index] = 1;
    }
  }
  return labels;
}

void write_report(const std::string& path, const MetricsReport& report) {
  json j;
  j["metric"] = report.metric;
  j["dataset"] = report.dataset;
  j["config_digest"] = report.config_digest;
  json per_class = json::object();
  for (std::size_t i = 0; i < report.class_names.size(); ++i) {
    if (report.class_defined.empty() || report.class_defined[i]) {
      per_class[report.class_names[i]] = report.per_class[i];
    } else {
      per_class[report.class_names[i]] = nullptr;
    }
  }
  j["per_class"] = std::move(per_class);
  j["mean"] = report.mean;
  j["warnings"] = report.warnings;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create report: " + path);
  out << j.dump(2) << "\n";
}

MetricsReport read_report(const std::string& path) {
  AccessLog::instance().record_read(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open report: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  json j = json::parse(ss.str());
  MetricsReport report;
  report.metric = j.at("metric").get<std::string>();
  report.dataset = j.value("dataset", std::string());
  report.config_digest = j.value("config_digest", std::string());
  for (auto it = j.at("per_class").begin(); it != j.at("per_class").end();
       ++it) {
    report.class_names.push_back(it.key());
    if (it.value().is_null()) {
      report.per_class.push_back(0.0);
      report.class_defined.push_back(false);
    } else {
      report.per_class.push_back(it.value().get<double>());
      report.class_defined.push_back(true);
    }
  }
  report.mean = j.at("mean").get<double>();
  if (j.contains("warnings")) {
    for (const auto& w : j["warnings"])
      report.warnings.push_back(w.get<std::string>());
  }
  return report;
}

}  // namespace nsod
