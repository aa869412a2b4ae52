#pragma once

#include "nsod/geometry.hpp"
#include "nsod/types.hpp"

#include <map>
#include <string>
#include <vector>

namespace nsod {

/// Per-class metric values plus their mean. Values are fractions in [0,1];
/// text output multiplies by 100.
struct MetricsReport {
  std::string metric;
  std::string dataset;
  std::string config_digest;
  std::vector<std::string> class_names;
  std::vector<double> per_class;
  std::vector<bool> class_defined;  // false = excluded from the mean
  double mean = 0.0;
  std::vector<std::string> warnings;
};

/// Computes the mean over defined classes and returns the report.
MetricsReport finalize_report(MetricsReport report);

/// VOC-style detection mAP at the given IoU threshold: per class, ranked
/// detections greedily match the best unmatched ground-truth instance;
/// duplicates are false positives. AP uses 11-point interpolation
/// (recall thresholds 0.0, 0.1, ..., 1.0). Ranking ties break by score,
/// then box coordinates, then image id.
MetricsReport detection_map(
    const std::vector<Detection>& detections,
    const std::map<std::string, std::vector<GtInstance>>& gt,
    const ClassCatalog& catalog, double iou_threshold = 0.5);

/// CorLoc: per class, the fraction of images containing that class whose
/// top-scoring detection overlaps some ground-truth instance of the class
/// at IoU >= 0.5.
MetricsReport corloc(const std::vector<Detection>& detections,
                     const std::map<std::string, std::vector<GtInstance>>& gt,
                     const ClassCatalog& catalog, double iou_threshold = 0.5);

/// Multi-class classification mAP over per-image score vectors:
/// non-interpolated AP (mean precision at each positive's rank) per class,
/// images ranked by score with image-id tie-breaks. Classes with zero
/// positive images are excluded from the mean with a warning.
MetricsReport classification_map(const std::vector<std::string>& image_ids,
                                 const std::vector<ClassScoreVector>& scores,
                                 const std::vector<std::vector<int>>& gt_labels,
                                 const ClassCatalog& catalog);

/// Top-1 accuracy per class: an image counts for every class in its label
/// set and is correct when the predicted class is among them.
MetricsReport top1_macc(const std::vector<std::string>& image_ids,
                        const std::vector<int>& predictions,
                        const std::vector<std::vector<int>>& gt_labels,
                        const ClassCatalog& catalog);

/// Fraction of ground-truth instances covered by at least one proposal of
/// the same image at IoU >= threshold.
double proposal_recall(const std::map<std::string, std::vector<Box>>& proposals,
                       const std::map<std::string, std::vector<GtInstance>>& gt,
                       double iou_threshold = 0.5);

/// Binary per-image multi-labels derived from ground truth.
std::vector<std::vector<int>> multi_labels_from_gt(
    const std::vector<std::string>& image_ids,
    const std::map<std::string, std::vector<GtInstance>>& gt, int classes);

/// Report JSON codec (object with metric, per_class map, mean, warnings).
void write_report(const std::string& path, const MetricsReport& report);
MetricsReport read_report(const std::string& path);

}  // namespace nsod
