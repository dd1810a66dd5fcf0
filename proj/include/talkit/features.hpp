#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "talkit/core.hpp"

namespace talkit {

using UnitMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Unit-level features of one video stream: one row per 16-frame unit.
struct FeatureSequence {
  std::string video_id;
  UnitMatrix units;

  FeatureSequence() = default;
  FeatureSequence(std::string id, UnitMatrix u);

  Eigen::Index size() const { return units.rows(); }
  Eigen::Index dim() const { return units.cols(); }
};

/// Linearly interpolated feature at fractional row index `i`; rows are
/// addressed at integer indices and `i` is clamped to [0, n-1].
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> unit_feature(
    const Eigen::MatrixBase<Derived>& units, double i) {
  using Vec = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index n = units.rows();
  if (n == 0) {
    throw DataError("unit_feature: empty sequence");
  }
  const double clamped = std::clamp(i, 0.0, static_cast<double>(n - 1));
  const auto lo = static_cast<Eigen::Index>(std::floor(clamped));
  const double frac = clamped - static_cast<double>(lo);
  if (frac == 0.0 || lo + 1 >= n) {
    return units.row(lo).transpose();
  }
  const auto w = static_cast<typename Derived::Scalar>(frac);
  Vec lower = units.row(lo).transpose();
  Vec upper = units.row(lo + 1).transpose();
  return lower + w * (upper - lower);
}

inline Eigen::VectorXf unit_feature(const FeatureSequence& seq, double i) {
  return unit_feature(seq.units, i);
}

// --- .uft binary format ---------------------------------------------------
// little-endian: "UFT1", u32 n, u32 d, n*d f32 row-major.

void save_features(const std::filesystem::path& path, const FeatureSequence& seq);
FeatureSequence load_features(const std::filesystem::path& path, std::string video_id = {});

// --- annotations (JSON lines: video_id, class_id, start_unit, end_unit) -----

std::vector<Annotation> load_annotations(const std::filesystem::path& path);
void save_annotations(const std::filesystem::path& path, const std::vector<Annotation>& annotations);

// --- dataset manifest -------------------------------------------------------

struct VideoEntry {
  std::string video_id;
  std::filesystem::path rgb_path;
  std::filesystem::path flow_path;
  double duration = 0.0;  // units
  std::string subset;     // "validation" (train) or "test"
};

struct DatasetManifest {
  int num_classes = 0;
  std::vector<VideoEntry> videos;
  std::vector<Annotation> annotations;

  /// Throws DataError on unknown video ids or out-of-range annotations.
  void validate() const;

  const VideoEntry& video(const std::string& id) const;
  std::vector<Annotation> annotations_for(const std::string& video_id) const;
  std::vector<const VideoEntry*> subset(const std::string& name) const;
};

// Manifest is a JSON document; stream paths are relative to its directory.
// Annotations live in a sibling JSON-lines file named by "annotations".
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Both streams of one video, plus their per-unit concatenation.
struct VideoFeatures {
  std::string video_id;
  double duration = 0.0;
  FeatureSequence rgb;
  FeatureSequence flow;
  FeatureSequence fused;
};

/// Per-unit concatenation of two streams (early fusion).
FeatureSequence fuse_early(const FeatureSequence& rgb, const FeatureSequence& flow);

VideoFeatures load_video(const VideoEntry& entry);

// --- synthetic dataset --------------------------------------------------------

struct SynthConfig {
  int num_videos = 100;
  int units_per_video = 200;
  int dim = 16;  // per stream
  int num_classes = 4;
  int actions_per_video = 3;
  int min_length = 6;
  int max_length = 30;
  double noise = 0.5;
  double rgb_scale = 0.5;  // rgb carries a weaker copy of the signature
  double test_fraction = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Per-class signature: three prototype vectors planted over consecutive
/// thirds of the action span. Classes come in pairs (2q+1, 2q+2) whose
/// signatures are time reversals of each other, so their span means agree.
struct SynthSignatures {
  // [class - 1][segment] -> prototype, for each stream
  std::vector<std::vector<Eigen::VectorXf>> rgb;
  std::vector<std::vector<Eigen::VectorXf>> flow;
};

SynthSignatures synth_signatures(const SynthConfig& cfg);

/// Partner class of a time-reversed pair (1<->2, 3<->4, ...). An odd last
/// class is its own partner (palindromic signature).
int reversed_partner(int class_id, int num_classes);

/// Writes `<dir>/videos/<id>.{rgb,flow}.uft`, `annotations.jsonl` and
/// `manifest.json`; returns the manifest. Pure function of cfg.
DatasetManifest generate_synthetic(const SynthConfig& cfg, const std::filesystem::path& dir);

}  // namespace talkit
