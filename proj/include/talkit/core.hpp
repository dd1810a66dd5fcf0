#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace talkit {

// Error categories map onto the CLI exit codes (1 usage, 2 data, 3 numeric).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Class id 0 is background; actions are 1..C.
inline constexpr int kBackground = 0;

/// Proposals shorter than this (in units) are rejected as degenerate.
inline constexpr double kMinIntervalLength = 1e-6;

/// Half-open span [start, end) in unit coordinates. One unit is 16 frames.
/// Endpoints are fractional so cascade refinement is not quantized.
struct Interval {
  double start = 0.0;
  double end = 0.0;

  Interval() = default;
  Interval(double s, double e);

  double length() const { return end - start; }
  bool operator==(const Interval&) const = default;
};

/// Temporal intersection-over-union; 0 for disjoint spans.
double tiou(const Interval& a, const Interval& b);

struct Proposal {
  Interval interval;
  double score = 0.0;
};

struct Detection {
  std::string video_id;
  Interval interval;
  int class_id = kBackground;
  double score = 0.0;
  // Cascade trace: confidence of the final class and the refined interval
  // after each step.
  std::vector<double> step_scores;
  std::vector<Interval> step_intervals;
};

struct Annotation {
  std::string video_id;
  int class_id = 1;
  Interval interval;
};

// Fixed-size representation variants under ablation.
struct GlobalPool {
  bool operator==(const GlobalPool&) const = default;
};
struct KPartPool {
  int k = 5;
  bool operator==(const KPartPool&) const = default;
};
struct Stpp {
  std::vector<int> levels{1, 2};
  bool operator==(const Stpp&) const = default;
};
struct Bsp {
  int context_points = 8;   // A
  int interior_points = 16; // B
  bool operator==(const Bsp&) const = default;
};

struct ReprSpec {
  std::variant<GlobalPool, KPartPool, Stpp, Bsp> variant = KPartPool{5};
  int n_ctx = 2;

  bool operator==(const ReprSpec&) const = default;
};

/// Throws UsageError when any hyperparameter is out of range.
void validate(const ReprSpec& spec);

/// Number of d-sized blocks the representation concatenates.
std::int64_t repr_block_count(const ReprSpec& spec);

/// Length of the fixed-size feature for unit features of width `dim`.
std::int64_t repr_output_dim(const ReprSpec& spec, std::int64_t dim);

/// Text form used by configs and reports: "global", "kpart:5",
/// "stpp:1,2,4", "bsp:8/16/8".
std::string to_string(const ReprSpec& spec);
ReprSpec parse_repr(const std::string& text, int n_ctx = 2);

}  // namespace talkit
