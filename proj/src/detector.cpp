#include "talkit/detector.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>
#include <numeric>

#include "talkit/repr.hpp"

namespace talkit {

using nlohmann::json;

void CascadeConfig::validate() const {
  if (steps < 1) {
    throw UsageError("cascade: steps must be >= 1");
  }
  if (!weights.empty()) {
    if (static_cast<int>(weights.size()) != steps) {
      throw UsageError("cascade: need one weight per step");
    }
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw UsageError("cascade: weights must be non-negative");
      total += w;
    }
    if (!(total > 0.0)) throw UsageError("cascade: weights must not all be zero");
  }
}

std::vector<double> CascadeConfig::normalized_weights() const {
  validate();
  if (weights.empty()) {
    return std::vector<double>(static_cast<std::size_t>(steps), 1.0 / steps);
  }
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<double> out;
  for (double w : weights) out.push_back(w / total);
  return out;
}

std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::RgbOnly: return "rgb";
    case FusionMode::FlowOnly: return "flow";
    case FusionMode::Early: return "early";
    case FusionMode::Late: return "late";
  }
  return "?";
}

FusionMode parse_fusion(const std::string& text) {
  if (text == "rgb") return FusionMode::RgbOnly;
  if (text == "flow") return FusionMode::FlowOnly;
  if (text == "early") return FusionMode::Early;
  if (text == "late") return FusionMode::Late;
  throw UsageError("unknown fusion mode '" + text + "' (rgb, flow, early, late)");
}

const FeatureSequence& stream_for(const VideoFeatures& video, FusionMode mode) {
  switch (mode) {
    case FusionMode::RgbOnly:
    case FusionMode::Late: return video.rgb;
    case FusionMode::FlowOnly: return video.flow;
    case FusionMode::Early: return video.fused;
  }
  return video.fused;
}

void DetectorModel::check(const VideoFeatures& video) const {
  const auto expect = [&](const Net& net, const FeatureSequence& seq, const char* what) {
    if (net.input_dim() != repr_output_dim(spec, seq.dim())) {
      throw DataError(std::string("detector: ") + what + " net input " +
                      std::to_string(net.input_dim()) + " does not match " + to_string(spec) +
                      " over d=" + std::to_string(seq.dim()));
    }
  };
  expect(primary, stream_for(video, fusion), fusion == FusionMode::Late ? "rgb" : "detection");
  if (fusion == FusionMode::Late) {
    if (!flow) throw DataError("detector: late fusion needs a flow net");
    if (flow->num_classes() != primary.num_classes()) {
      throw DataError("detector: late-fusion nets disagree on class count");
    }
    expect(*flow, video.flow, "flow");
  }
}

Decision<float> fuse_late(const HeadOutput<float>& rgb, const HeadOutput<float>& flow) {
  if (rgb.logits.size() != flow.logits.size()) {
    throw DataError("fuse_late: heads disagree on class count");
  }
  const Decision<float> a = decide(rgb);
  const Decision<float> b = decide(flow);
  return {0.5f * (a.probs + b.probs), 0.5f * (a.offsets + b.offsets)};
}

Decision<float> evaluate(const DetectorModel& model, const VideoFeatures& video,
                         const Interval& interval) {
  const FeatureSequence& seq = stream_for(video, model.fusion);
  const Eigen::VectorXf x = extract(seq.units, interval, model.spec);
  if (model.fusion != FusionMode::Late) {
    return decide(forward(model.primary, x));
  }
  const Eigen::VectorXf xf = extract(video.flow.units, interval, model.spec);
  return fuse_late(forward(model.primary, x), forward(*model.flow, xf));
}

ClipResult detect_clip(const DetectorModel& model, const VideoFeatures& video,
                       const Interval& interval, const CascadeConfig& cascade) {
  const std::vector<double> weights = cascade.normalized_weights();
  ClipResult result;
  Interval current = interval;
  Eigen::VectorXd mixed = Eigen::VectorXd::Zero(model.num_classes() + 1);

  for (int t = 0; t < cascade.steps; ++t) {
    const Decision<float> d = evaluate(model, video, current);
    mixed += weights[static_cast<std::size_t>(t)] * d.probs.cast<double>();
    Eigen::Index cls = 0;
    d.probs.tail(d.probs.size() - 1).maxCoeff(&cls);
    ++cls;  // foreground argmax
    double s = current.start + d.offsets(cls, 0);
    double e = current.end + d.offsets(cls, 1);
    if (cascade.clamp_to_video) {
      s = std::clamp(s, 0.0, video.duration);
      e = std::clamp(e, 0.0, video.duration);
    }
    s = std::max(s, 0.0);
    result.steps.push_back(d);
    if (!(e - s >= kMinIntervalLength)) {
      std::ostringstream os;
      os << video.video_id << " [" << interval.start << ", " << interval.end
         << ") collapsed at cascade step " << t + 1;
      result.diagnostic = os.str();
      result.collapsed = true;
      return result;
    }
    current = Interval(s, e);
    result.intervals.push_back(current);
  }

  Eigen::Index final_class = 0;
  mixed.maxCoeff(&final_class);
  if (final_class == kBackground) {
    return result;
  }
  Detection det;
  det.video_id = video.video_id;
  det.interval = current;
  det.class_id = static_cast<int>(final_class);
  det.score = mixed[final_class];
  for (const auto& d : result.steps) det.step_scores.push_back(d.probs[final_class]);
  det.step_intervals = result.intervals;
  result.detection = std::move(det);
  return result;
}

std::vector<Detection> detect_video(const DetectorModel& model, const VideoFeatures& video,
                                    const std::vector<Proposal>& proposals,
                                    const CascadeConfig& cascade, double nms_threshold) {
  model.check(video);
  std::vector<Detection> dets;
  for (const auto& p : proposals) {
    ClipResult r = detect_clip(model, video, p.interval, cascade);
    if (r.detection) dets.push_back(std::move(*r.detection));
  }
  return nms(std::move(dets), nms_threshold);
}

void save_detections(const std::filesystem::path& path, const std::vector<Detection>& dets) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw DataError("cannot write '" + path.string() + "'");
  }
  for (const auto& d : dets) {
    out << json{{"video_id", d.video_id},
                {"class_id", d.class_id},
                {"start", d.interval.start},
                {"end", d.interval.end},
                {"score", d.score}}
               .dump()
        << '\n';
  }
}

std::vector<Detection> load_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open detections '" + path.string() + "'");
  }
  std::vector<Detection> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      Detection d;
      d.video_id = j.at("video_id").get<std::string>();
      d.class_id = j.at("class_id").get<int>();
      d.interval = Interval(j.at("start").get<double>(), j.at("end").get<double>());
      d.score = j.at("score").get<double>();
      if (d.class_id < 1) throw DataError("detection with background class id");
      out.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  return out;
}

}  // namespace talkit
