#include "talkit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace talkit {

void sort_for_eval(std::vector<Detection>& detections) {
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) {
                     if (a.score != b.score) return a.score > b.score;
                     if (a.video_id != b.video_id) return a.video_id < b.video_id;
                     return a.interval.start < b.interval.start;
                   });
}

std::vector<Match> assign_matches(const std::vector<Detection>& detections,
                                  const std::vector<Annotation>& annotations, int class_id,
                                  double threshold) {
  std::vector<Detection> dets;
  for (const auto& d : detections) {
    if (d.class_id == class_id) dets.push_back(d);
  }
  sort_for_eval(dets);

  std::map<std::string, std::vector<int>> gt;
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    if (annotations[i].class_id == class_id) {
      gt[annotations[i].video_id].push_back(static_cast<int>(i));
    }
  }
  std::vector<bool> used(annotations.size(), false);

  std::vector<Match> out;
  out.reserve(dets.size());
  for (auto& d : dets) {
    int best = -1;
    double best_iou = -1.0;
    if (const auto it = gt.find(d.video_id); it != gt.end()) {
      for (int a : it->second) {
        if (used[static_cast<std::size_t>(a)]) continue;
        const double iou = tiou(d.interval, annotations[static_cast<std::size_t>(a)].interval);
        if (iou > best_iou) {
          best_iou = iou;
          best = a;
        }
      }
    }
    const bool tp = best >= 0 && best_iou >= threshold;
    if (tp) used[static_cast<std::size_t>(best)] = true;
    out.push_back({std::move(d), tp ? best : -1});
  }
  return out;
}

std::vector<bool> match_detections(const std::vector<Detection>& detections,
                                   const std::vector<Annotation>& annotations, int class_id,
                                   double threshold) {
  std::vector<bool> flags;
  for (const auto& m : assign_matches(detections, annotations, class_id, threshold)) {
    flags.push_back(m.annotation >= 0);
  }
  return flags;
}

std::optional<double> average_precision(const std::vector<bool>& tp_flags, int num_gt) {
  if (num_gt < 0) {
    throw UsageError("average_precision: num_gt must be >= 0");
  }
  if (num_gt == 0) {
    if (tp_flags.empty()) return std::nullopt;
    return 0.0;
  }
  const std::size_t n = tp_flags.size();
  std::vector<double> precision(n);
  std::vector<double> recall(n);
  double tp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (tp_flags[i]) tp += 1.0;
    precision[i] = tp / static_cast<double>(i + 1);
    recall[i] = tp / num_gt;
  }
  // Envelope: precision at rank i becomes the max precision at any later rank.
  for (std::size_t i = n; i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * precision[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

double EvalReport::map_at(double threshold) const {
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    if (std::abs(thresholds[t] - threshold) < 1e-12) return map[t];
  }
  throw UsageError("threshold not in report");
}

EvalReport map_at(const std::vector<Detection>& detections,
                  const std::vector<Annotation>& annotations, int num_classes,
                  const std::vector<double>& thresholds) {
  if (annotations.empty()) {
    throw DataError("map_at: empty annotation set");
  }
  if (num_classes < 1) {
    throw UsageError("map_at: num_classes must be >= 1");
  }
  EvalReport report;
  report.thresholds = thresholds;
  for (int c = 1; c <= num_classes; ++c) report.classes.push_back(c);
  std::vector<int> num_gt(static_cast<std::size_t>(num_classes) + 1, 0);
  for (const auto& a : annotations) {
    if (a.class_id < 1 || a.class_id > num_classes) {
      throw DataError("map_at: annotation class outside [1, C]");
    }
    ++num_gt[static_cast<std::size_t>(a.class_id)];
  }
  for (double th : thresholds) {
    std::vector<std::optional<double>> row;
    double sum = 0.0;
    int counted = 0;
    for (int c = 1; c <= num_classes; ++c) {
      const int g = num_gt[static_cast<std::size_t>(c)];
      const auto ap = average_precision(match_detections(detections, annotations, c, th), g);
      row.push_back(g > 0 ? ap : std::nullopt);
      if (g > 0) {
        sum += *ap;
        ++counted;
      }
    }
    report.ap.push_back(std::move(row));
    report.map.push_back(counted > 0 ? sum / counted : 0.0);
  }
  return report;
}

std::string format_report_table(const EvalReport& report, bool per_class) {
  std::ostringstream os;
  char cell[64];
  os << "tIoU      ";
  for (double th : report.thresholds) {
    std::snprintf(cell, sizeof(cell), " %7.2f", th);
    os << cell;
  }
  os << '\n';
  if (per_class) {
    for (std::size_t c = 0; c < report.classes.size(); ++c) {
      std::snprintf(cell, sizeof(cell), "AP[%3d]   ", report.classes[c]);
      os << cell;
      for (std::size_t t = 0; t < report.thresholds.size(); ++t) {
        const auto& ap = report.ap[t][c];
        if (ap) {
          std::snprintf(cell, sizeof(cell), " %7.2f", 100.0 * *ap);
        } else {
          std::snprintf(cell, sizeof(cell), " %7s", "-");
        }
        os << cell;
      }
      os << '\n';
    }
  }
  os << "mAP(%)    ";
  for (double m : report.map) {
    std::snprintf(cell, sizeof(cell), " %7.2f", 100.0 * m);
    os << cell;
  }
  os << '\n';
  return os.str();
}

std::string format_report_csv(const EvalReport& report) {
  std::ostringstream os;
  os << "threshold,class_id,ap\n";
  char line[96];
  for (std::size_t t = 0; t < report.thresholds.size(); ++t) {
    for (std::size_t c = 0; c < report.classes.size(); ++c) {
      const auto& ap = report.ap[t][c];
      if (ap) {
        std::snprintf(line, sizeof(line), "%.2f,%d,%.10f\n", report.thresholds[t],
                      report.classes[c], *ap);
      } else {
        std::snprintf(line, sizeof(line), "%.2f,%d,\n", report.thresholds[t], report.classes[c]);
      }
      os << line;
    }
    std::snprintf(line, sizeof(line), "%.2f,mAP,%.10f\n", report.thresholds[t], report.map[t]);
    os << line;
  }
  return os.str();
}

}  // namespace talkit
