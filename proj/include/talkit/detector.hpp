#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "talkit/core.hpp"
#include "talkit/features.hpp"
#include "talkit/net.hpp"
#include "talkit/proposals.hpp"

namespace talkit {

struct CascadeConfig {
  int steps = 3;
  std::vector<double> weights;  // per-step; empty means uniform
  bool clamp_to_video = true;

  void validate() const;
  /// Weights normalized to sum to one, length == steps.
  std::vector<double> normalized_weights() const;
};

enum class FusionMode { RgbOnly, FlowOnly, Early, Late };

std::string to_string(FusionMode mode);
FusionMode parse_fusion(const std::string& text);

/// Trained detection head(s) for one fusion mode. Late fusion carries one
/// net per stream; every other mode uses `primary` only. Parameters are
/// shared by all cascade steps.
struct DetectorModel {
  FusionMode fusion = FusionMode::Early;
  ReprSpec spec;
  Net primary;              // rgb net for Late
  std::optional<Net> flow;  // Late only

  int num_classes() const { return primary.num_classes(); }
  /// Throws DataError if net inputs disagree with spec and the streams.
  void check(const VideoFeatures& video) const;
};

/// Input sequence the primary net reads under `mode`.
const FeatureSequence& stream_for(const VideoFeatures& video, FusionMode mode);

/// Mean of softmaxed confidences and mean of offsets of two heads.
Decision<float> fuse_late(const HeadOutput<float>& rgb, const HeadOutput<float>& flow);

/// Single evaluation of the head(s) on one interval.
Decision<float> evaluate(const DetectorModel& model, const VideoFeatures& video,
                         const Interval& interval);

struct ClipResult {
  std::optional<Detection> detection;  // empty for background
  std::vector<Decision<float>> steps;  // per-step decisions
  std::vector<Interval> intervals;     // interval after each step
  bool collapsed = false;              // refinement inverted the boundaries
  std::string diagnostic;
};

/// Cascaded refinement: at each step extract the current interval, evaluate,
/// refine with the argmax foreground class's offsets. Final class is the
/// argmax of the weighted mean of per-step confidences; background drops
/// the clip.
ClipResult detect_clip(const DetectorModel& model, const VideoFeatures& video,
                       const Interval& interval, const CascadeConfig& cascade);

/// detect_clip over every proposal, background dropped, class-wise NMS,
/// sorted by score.
std::vector<Detection> detect_video(const DetectorModel& model, const VideoFeatures& video,
                                    const std::vector<Proposal>& proposals,
                                    const CascadeConfig& cascade, double nms_threshold);

// JSON lines: {"video_id", "class_id", "start", "end", "score"}
void save_detections(const std::filesystem::path& path, const std::vector<Detection>& dets);
std::vector<Detection> load_detections(const std::filesystem::path& path);

}  // namespace talkit
