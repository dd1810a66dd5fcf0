#pragma once

#include <optional>
#include <string>
#include <vector>

#include "talkit/core.hpp"

namespace talkit {

inline const std::vector<double> kDefaultThresholds{0.3, 0.4, 0.5, 0.6, 0.7};

/// Stable evaluation order: score descending, then video_id, then start.
void sort_for_eval(std::vector<Detection>& detections);

/// TP/FP flag per detection of class `class_id`, in evaluation order. Each
/// detection claims the unmatched same-video ground truth with the highest
/// tIoU if it reaches `threshold`.
std::vector<bool> match_detections(const std::vector<Detection>& detections,
                                   const std::vector<Annotation>& annotations, int class_id,
                                   double threshold);

struct Match {
  Detection detection;
  int annotation = -1;  // index into the annotation list, -1 for FP
};

/// Same greedy rule as match_detections, reporting which annotation each
/// detection claimed.
std::vector<Match> assign_matches(const std::vector<Detection>& detections,
                                  const std::vector<Annotation>& annotations, int class_id,
                                  double threshold);

/// Area under the interpolated (envelope) precision-recall curve. Returns
/// nullopt when num_gt == 0 and there are no detections; 0 when num_gt == 0
/// but detections exist.
std::optional<double> average_precision(const std::vector<bool>& tp_flags, int num_gt);

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<int> classes;  // 1..C
  // ap[t][c]; nullopt marks classes without ground truth (excluded from mAP)
  std::vector<std::vector<std::optional<double>>> ap;
  std::vector<double> map;  // per threshold

  double map_at(double threshold) const;
};

/// AP per class per threshold; mAP is the unweighted mean over classes that
/// have ground truth.
EvalReport map_at(const std::vector<Detection>& detections,
                  const std::vector<Annotation>& annotations, int num_classes,
                  const std::vector<double>& thresholds = kDefaultThresholds);

/// mAP row in percent under a tIoU header row.
std::string format_report_table(const EvalReport& report, bool per_class = true);
std::string format_report_csv(const EvalReport& report);

}  // namespace talkit
