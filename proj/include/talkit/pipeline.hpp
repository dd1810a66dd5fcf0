#pragma once

// End-to-end experiment plumbing shared by the CLI and the acceptance
// suite: dataset loading, training-clip sampling and labeling, stage
// training, proposal generation, detection, and ablation sweeps.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "talkit/config.hpp"
#include "talkit/detector.hpp"
#include "talkit/eval.hpp"
#include "talkit/features.hpp"
#include "talkit/net.hpp"
#include "talkit/proposals.hpp"

namespace talkit {

/// Worker count from TALKIT_THREADS (default: hardware concurrency).
int worker_threads();

/// Runs fn(i) for i in [0, n) on up to worker_threads() threads. Each index
/// must write only its own output slot, which keeps results order-independent.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

struct Dataset {
  DatasetManifest manifest;
  std::vector<VideoFeatures> train;  // "validation" subset
  std::vector<VideoFeatures> test;   // "test" subset

  std::vector<Annotation> test_annotations() const;
};

Dataset load_dataset(const std::filesystem::path& manifest_path);

struct LabeledClip {
  std::size_t video = 0;  // index into the video list
  Interval interval;
  ClipLabel label;
};

/// Label rule: class of the highest-tIoU ground truth when tIoU >= pos,
/// background when < neg, otherwise nullopt (discarded). `binary` maps every
/// action class to 1.
std::optional<ClipLabel> label_clip(const Interval& clip, const std::vector<Annotation>& gts,
                                    double pos_tiou, double neg_tiou, bool binary);

/// Jittered copies of each ground truth, random background windows and (for
/// the proposal stage) positive sliding windows, each labeled by label_clip.
std::vector<LabeledClip> sample_training_clips(const std::vector<VideoFeatures>& videos,
                                               const DatasetManifest& manifest,
                                               const ExperimentConfig& cfg, bool binary,
                                               std::uint64_t seed);

TrainingSet build_training_set(const std::vector<VideoFeatures>& videos,
                               const std::vector<LabeledClip>& clips, const ReprSpec& spec,
                               const std::function<const FeatureSequence&(const VideoFeatures&)>& stream);

struct StageResult {
  Net net;
  std::vector<LossPoint> loss_curve;
  double train_accuracy = 0.0;
  std::size_t num_clips = 0;
};

StageResult train_tpg(const Dataset& data, const ExperimentConfig& cfg);

struct DetectorTraining {
  DetectorModel model;
  std::vector<StageResult> stages;  // one per trained net (two for late fusion)
};

DetectorTraining train_det(const Dataset& data, const ExperimentConfig& cfg, FusionMode fusion);

/// Sliding windows scored by the proposal net, per-video NMS, then AN.
ProposalSet generate_proposals(const std::vector<VideoFeatures>& videos, const Net& tpg,
                               const ExperimentConfig& cfg, double average_number);

/// `per_gt` jittered copies of every ground truth, score 1.
ProposalSet jitter_proposals(const std::vector<VideoFeatures>& videos,
                             const DatasetManifest& manifest, double jitter, int per_gt,
                             std::uint64_t seed);

std::vector<Detection> run_detection(const DetectorModel& model,
                                     const std::vector<VideoFeatures>& videos,
                                     const ProposalSet& proposals, const CascadeConfig& cascade,
                                     double nms_threshold);

struct CascadeStudy {
  std::size_t true_positives = 0;
  std::size_t improved = 0;  // error after the last step < after the first
  std::vector<double> mean_error;  // per step, over true positives

  double improved_fraction() const {
    return true_positives ? static_cast<double>(improved) / true_positives : 0.0;
  }
};

/// Boundary error |ds| + |de| of each true positive after every cascade step.
CascadeStudy study_cascade(const std::vector<Detection>& detections,
                           const std::vector<Annotation>& annotations, int num_classes,
                           double threshold);

// --- ablation -----------------------------------------------------------------

enum class AblationAxis { K, Repr, Cascade, Fusion, An };

AblationAxis parse_axis(const std::string& text);
std::string to_string(AblationAxis axis);

struct AblationRow {
  std::string value;
  EvalReport report;
  CascadeStudy cascade;  // filled for the cascade axis
};

struct AblationResult {
  AblationAxis axis;
  std::vector<AblationRow> rows;
  std::vector<std::string> config_echoes;  // per row, resolved config
};

/// Varies exactly one axis; every other field is held at the base config.
/// Proposals (and, where the axis does not affect training, the detector)
/// are computed once and reused.
AblationResult run_ablation(const Dataset& data, const ExperimentConfig& base, AblationAxis axis,
                            const std::function<void(const std::string&)>& log = {});

std::string format_ablation(const AblationResult& result);

// --- run directory ----------------------------------------------------------------

/// 64-bit FNV-1a of a file's bytes, hex.
std::string file_hash(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string loss_curve_csv(const std::vector<LossPoint>& curve);

}  // namespace talkit
