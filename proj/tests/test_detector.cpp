#include <gtest/gtest.h>

#include "support.hpp"
#include "talkit/detector.hpp"
#include "talkit/repr.hpp"

using namespace talkit;

namespace {

VideoFeatures make_video(std::uint64_t seed, int n = 40, int d = 3, bool same_streams = false) {
  Rng rng(seed);
  UnitMatrix rgb(n, d), flow(n, d);
  for (Eigen::Index i = 0; i < rgb.size(); ++i) rgb.data()[i] = static_cast<float>(rng.normal());
  for (Eigen::Index i = 0; i < flow.size(); ++i) flow.data()[i] = static_cast<float>(rng.normal());
  if (same_streams) flow = rgb;
  VideoFeatures v;
  v.video_id = "vid";
  v.duration = n;
  v.rgb = {"vid", rgb};
  v.flow = {"vid", flow};
  v.fused = fuse_early(v.rgb, v.flow);
  return v;
}

DetectorModel make_model(FusionMode mode, int d, std::uint64_t seed, int classes = 3) {
  DetectorModel m;
  m.fusion = mode;
  m.spec = parse_repr("kpart:3", 2);
  const int stream_dim = mode == FusionMode::Early ? 2 * d : d;
  m.primary = Net::random(repr_output_dim(m.spec, stream_dim), 12, classes, seed);
  if (mode == FusionMode::Late) m.flow = Net::random(repr_output_dim(m.spec, d), 12, classes, seed + 1);
  return m;
}

void zero_offsets(Net& net) {
  for (Eigen::Index c = 0; c < net.output_dim(); ++c) {
    if (c % 3 == 0) continue;
    net.w2.col(c).setZero();
    net.b2[c] = 0.0f;
  }
}

}  // namespace

TEST(Cascade, ZeroOffsetsAreAFixedPoint) {
  const VideoFeatures v = make_video(1);
  for (FusionMode mode : {FusionMode::Early, FusionMode::Late, FusionMode::RgbOnly}) {
    DetectorModel m = make_model(mode, 3, 5);
    zero_offsets(m.primary);
    if (m.flow) zero_offsets(*m.flow);
    for (int steps : {1, 2, 5}) {
      CascadeConfig cfg;
      cfg.steps = steps;
      const Interval iv(7.25, 19.5);
      const ClipResult r = detect_clip(m, v, iv, cfg);
      ASSERT_EQ(r.intervals.size(), static_cast<std::size_t>(steps));
      for (const auto& step : r.intervals) EXPECT_EQ(step, iv);
    }
  }
}

TEST(Cascade, SingleStepEqualsOneForwardPass) {
  const VideoFeatures v = make_video(2);
  DetectorModel m = make_model(FusionMode::Early, 3, 9);
  m.primary.b2[3] += 5.0f;  // make class 1 win so a detection is produced
  CascadeConfig cfg;
  cfg.steps = 1;
  const Interval iv(10, 22);
  const ClipResult r = detect_clip(m, v, iv, cfg);
  const Decision<float> d = decide(forward(m.primary, extract(v.fused.units, iv, m.spec)));
  ASSERT_TRUE(r.detection.has_value());
  Eigen::Index best = 0;
  d.probs.maxCoeff(&best);
  EXPECT_EQ(r.detection->class_id, best);
  EXPECT_EQ(r.detection->score, static_cast<double>(d.probs[best]));
  EXPECT_EQ(r.detection->interval,
            Interval(iv.start + d.offsets(best, 0), iv.end + d.offsets(best, 1)));
}

TEST(Cascade, LateFusionOfIdenticalStreamsEqualsSingleStream) {
  const VideoFeatures v = make_video(3, 40, 3, true);
  DetectorModel late = make_model(FusionMode::Late, 3, 4);
  late.flow = late.primary;
  DetectorModel single = late;
  single.fusion = FusionMode::RgbOnly;
  single.flow.reset();
  CascadeConfig cfg;
  for (const Interval iv : {Interval(0, 8), Interval(12.5, 30), Interval(31, 40)}) {
    const ClipResult a = detect_clip(late, v, iv, cfg);
    const ClipResult b = detect_clip(single, v, iv, cfg);
    ASSERT_EQ(a.steps.size(), b.steps.size());
    for (std::size_t s = 0; s < a.steps.size(); ++s) {
      EXPECT_EQ(a.steps[s].probs, b.steps[s].probs);
      EXPECT_EQ(a.steps[s].offsets, b.steps[s].offsets);
    }
    EXPECT_EQ(a.intervals, b.intervals);
    EXPECT_EQ(a.detection.has_value(), b.detection.has_value());
  }
}

TEST(Cascade, CollapseDropsClipWithDiagnostic) {
  const VideoFeatures v = make_video(4);
  DetectorModel m = make_model(FusionMode::Early, 3, 6);
  zero_offsets(m.primary);
  for (Eigen::Index c = 1; c <= 3; ++c) {
    m.primary.b2[3 * c + 1] = 10.0f;   // start moves right
    m.primary.b2[3 * c + 2] = -10.0f;  // end moves left
  }
  const ClipResult r = detect_clip(m, v, Interval(5, 12), {});
  EXPECT_TRUE(r.collapsed);
  EXPECT_FALSE(r.detection.has_value());
  EXPECT_NE(r.diagnostic.find("collapsed"), std::string::npos);
}

TEST(Cascade, ClampsToVideo) {
  const VideoFeatures v = make_video(5);
  DetectorModel m = make_model(FusionMode::Early, 3, 7);
  zero_offsets(m.primary);
  for (Eigen::Index c = 1; c <= 3; ++c) {
    m.primary.b2[3 * c + 1] = -4.0f;
    m.primary.b2[3 * c + 2] = 4.0f;
  }
  const ClipResult r = detect_clip(m, v, Interval(2, 37), {});
  EXPECT_EQ(r.intervals.back(), Interval(0, 40));
}

TEST(Cascade, WeightsNormalize) {
  CascadeConfig cfg;
  cfg.steps = 3;
  EXPECT_NEAR(cfg.normalized_weights()[1], 1.0 / 3.0, 1e-15);
  cfg.weights = {1, 1, 2};
  EXPECT_DOUBLE_EQ(cfg.normalized_weights()[2], 0.5);
  cfg.weights = {1, 2};
  EXPECT_THROW(cfg.validate(), UsageError);
  cfg.steps = 0;
  cfg.weights.clear();
  EXPECT_THROW(cfg.validate(), UsageError);
}

TEST(Detector, ShapeChecks) {
  const VideoFeatures v = make_video(6);
  DetectorModel m = make_model(FusionMode::Early, 3, 8);
  m.fusion = FusionMode::RgbOnly;  // net was built for the fused stream
  EXPECT_THROW(m.check(v), DataError);
  DetectorModel late = make_model(FusionMode::Late, 3, 8);
  late.flow.reset();
  EXPECT_THROW(late.check(v), DataError);
  EXPECT_THROW(parse_fusion("both"), UsageError);
}

TEST(Detector, VideoDetectionsSortedAndIoRoundTrip) {
  const VideoFeatures v = make_video(7);
  DetectorModel m = make_model(FusionMode::Early, 3, 10);
  m.primary.b2[3] += 4.0f;
  std::vector<Proposal> props;
  for (int s = 0; s < 30; s += 3) props.push_back({Interval(s, s + 8), 1.0});
  const auto dets = detect_video(m, v, props, {}, 0.5);
  ASSERT_FALSE(dets.empty());
  for (std::size_t i = 1; i < dets.size(); ++i) EXPECT_GE(dets[i - 1].score, dets[i].score);
  const auto dir = talkit::testing::scratch_dir("dets");
  save_detections(dir / "d.jsonl", dets);
  const auto back = load_detections(dir / "d.jsonl");
  ASSERT_EQ(back.size(), dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    EXPECT_EQ(back[i].interval, dets[i].interval);
    EXPECT_EQ(back[i].score, dets[i].score);
    EXPECT_EQ(back[i].class_id, dets[i].class_id);
  }
}
