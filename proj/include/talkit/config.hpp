#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "talkit/core.hpp"
#include "talkit/detector.hpp"
#include "talkit/eval.hpp"
#include "talkit/features.hpp"
#include "talkit/net.hpp"
#include "talkit/proposals.hpp"

namespace talkit {

/// Flat `key = value` file; `#` starts a comment. Unknown keys are an error
/// when the consumer calls finish().
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback);
  double get(const std::string& key, double fallback);
  int get(const std::string& key, int fallback);
  std::uint64_t get(const std::string& key, std::uint64_t fallback);
  bool get(const std::string& key, bool fallback);
  std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback);
  std::vector<std::string> get_strings(const std::string& key, char sep,
                                       const std::vector<std::string>& fallback);

  /// Throws UsageError naming any key that was never read.
  void finish() const;

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> read_;
};

SynthConfig load_synth_config(const std::filesystem::path& path,
                              std::filesystem::path* output_dir = nullptr);

/// How detection proposals are produced.
enum class ProposalSource {
  Tpg,     // sliding windows scored by the proposal network
  Jitter,  // ground truth with random boundary jitter (cascade studies)
};

struct ExperimentConfig {
  std::filesystem::path manifest;
  std::filesystem::path output_dir = "runs/experiment";
  std::uint64_t seed = 0;
  bool seed_set = false;

  ReprSpec repr{KPartPool{5}, 2};      // detection stage
  ReprSpec tpg_repr{KPartPool{5}, 2};  // proposal stage
  int hidden = 1000;

  TrainConfig train;  // learning_rate resolved from the fusion mode
  double lr_two_stream = 0.001;
  double lr_single_stream = 0.005;
  double pos_tiou = 0.5;
  double neg_tiou = 0.3;
  int samples_per_gt = 8;
  double train_jitter = 0.4;  // jitter span, fraction of the ground-truth length
  int negatives_per_video = 24;
  int tpg_iterations = -1;  // -1: same as iterations

  WindowConfig windows;
  double average_number = 500;
  double proposal_nms = 0.5;
  double detection_nms = 0.5;
  CascadeConfig cascade;
  FusionMode fusion = FusionMode::Early;
  std::vector<double> thresholds = kDefaultThresholds;

  ProposalSource proposal_source = ProposalSource::Tpg;
  double proposal_jitter = 0.4;
  int proposals_per_gt = 3;

  // Sweep values per ablation axis.
  std::vector<double> ablate_k{1, 3, 5, 10};
  std::vector<std::string> ablate_repr{"stpp:1,2", "stpp:1,2,4", "bsp:2/4/2", "bsp:4/8/4",
                                       "bsp:8/16/8", "kpart:3", "kpart:5", "kpart:10"};
  std::vector<double> ablate_steps{1, 3};
  std::vector<std::string> ablate_fusion{"rgb", "flow", "early", "late"};
  std::vector<double> ablate_an{50, 100, 300, 500, 600};

  /// Learning rate for a fusion mode: two-stream (early) vs single-stream.
  double learning_rate_for(FusionMode mode) const;
  TrainConfig train_config(FusionMode mode, std::uint64_t seed_offset) const;

  /// Resolved `key = value` text, one per line, fixed key order.
  std::string echo() const;
};

ExperimentConfig parse_experiment(KeyValueFile& kv, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment(const std::filesystem::path& path);

}  // namespace talkit
