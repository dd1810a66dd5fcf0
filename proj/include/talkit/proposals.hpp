#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "talkit/core.hpp"
#include "talkit/features.hpp"
#include "talkit/net.hpp"

namespace talkit {

struct WindowConfig {
  std::vector<double> lengths{1, 2, 4, 8, 16, 32};  // units, strictly increasing
  double stride = 0.5;                              // fraction of window length

  void validate() const;
};

/// Proposals of one video, sorted by descending score.
struct ProposalList {
  std::string video_id;
  std::vector<Proposal> proposals;
};

using ProposalSet = std::vector<ProposalList>;

/// Multi-scale sliding windows over [0, duration). A window longer than the
/// video is clipped to [0, duration). Output is deduplicated.
std::vector<Interval> slide_windows(double duration, const WindowConfig& cfg);

/// Scores windows with the binary (C = 1) head: score = P(action); each
/// window is refined once by the action-row offsets and clamped to the video.
ProposalList score_proposals(const FeatureSequence& seq, double duration,
                             const std::vector<Interval>& windows, const Net& tpg,
                             const ReprSpec& spec);

struct AnSelection {
  ProposalSet proposals;
  double threshold = 0.0;  // lowest retained score
  bool kept_all = false;   // AN exceeded what was available
};

/// Keeps the globally top-scoring AN * |videos| proposals (ties broken by
/// video order, then list position), so the mean per-video count is AN.
AnSelection select_by_an(const ProposalSet& sets, double average_number);

/// Greedy NMS: visit by descending score, drop anything whose tIoU with a
/// kept item is >= threshold. Returns kept items in score order.
std::vector<Proposal> nms(std::vector<Proposal> items, double threshold);

/// Class-wise greedy NMS for detections.
std::vector<Detection> nms(std::vector<Detection> items, double threshold);

// JSON lines: {"video_id", "start", "end", "score"}
void save_proposals(const std::filesystem::path& path, const ProposalSet& sets);
ProposalSet load_proposals(const std::filesystem::path& path);

}  // namespace talkit
