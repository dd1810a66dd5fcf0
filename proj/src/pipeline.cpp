#include "talkit/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "talkit/repr.hpp"
#include "talkit/rng.hpp"

namespace talkit {

namespace fs = std::filesystem;

namespace {

// Seed offsets keep each stage's random stream independent.
constexpr std::uint64_t kTpgSampleSeed = 101;
constexpr std::uint64_t kTpgInitSeed = 102;
constexpr std::uint64_t kTpgTrainSeed = 103;
constexpr std::uint64_t kDetSampleSeed = 201;
constexpr std::uint64_t kDetInitSeed = 202;
constexpr std::uint64_t kDetTrainSeed = 203;

}  // namespace

int worker_threads() {
  if (const char* env = std::getenv("TALKIT_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(worker_threads()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<Annotation> Dataset::test_annotations() const {
  std::vector<Annotation> out;
  for (const auto& v : test) {
    for (auto& a : manifest.annotations_for(v.video_id)) out.push_back(std::move(a));
  }
  return out;
}

Dataset load_dataset(const fs::path& manifest_path) {
  Dataset data;
  data.manifest = load_manifest(manifest_path);
  const auto load = [](const std::vector<const VideoEntry*>& entries) {
    std::vector<VideoFeatures> out(entries.size());
    parallel_for(entries.size(), [&](std::size_t i) { out[i] = load_video(*entries[i]); });
    return out;
  };
  data.train = load(data.manifest.subset("validation"));
  data.test = load(data.manifest.subset("test"));
  return data;
}

std::optional<ClipLabel> label_clip(const Interval& clip, const std::vector<Annotation>& gts,
                                    double pos_tiou, double neg_tiou, bool binary) {
  const Annotation* best = nullptr;
  double best_iou = 0.0;
  for (const auto& g : gts) {
    const double iou = tiou(clip, g.interval);
    if (iou > best_iou) {
      best_iou = iou;
      best = &g;
    }
  }
  if (best != nullptr && best_iou >= pos_tiou) {
    return ClipLabel{binary ? 1 : best->class_id, best->interval.start - clip.start,
                     best->interval.end - clip.end};
  }
  if (best_iou < neg_tiou) {
    return ClipLabel{kBackground, 0.0, 0.0};
  }
  return std::nullopt;
}

namespace {

std::optional<Interval> jitter(const Interval& gt, double amount, double duration, Rng& rng) {
  const double len = gt.length();
  const double s = std::clamp(gt.start + rng.uniform(-amount, amount) * len, 0.0, duration);
  const double e = std::clamp(gt.end + rng.uniform(-amount, amount) * len, 0.0, duration);
  if (e - s < kMinIntervalLength) return std::nullopt;
  return Interval(s, e);
}

}  // namespace

std::vector<LabeledClip> sample_training_clips(const std::vector<VideoFeatures>& videos,
                                               const DatasetManifest& manifest,
                                               const ExperimentConfig& cfg, bool binary,
                                               std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledClip> clips;
  const double min_len = cfg.windows.lengths.front();
  const double max_len = cfg.windows.lengths.back();
  for (std::size_t v = 0; v < videos.size(); ++v) {
    const auto& video = videos[v];
    const auto gts = manifest.annotations_for(video.video_id);
    const auto add = [&](const Interval& clip) {
      if (auto label = label_clip(clip, gts, cfg.pos_tiou, cfg.neg_tiou, binary)) {
        clips.push_back({v, clip, *label});
      }
    };
    for (const auto& g : gts) {
      add(g.interval);
      for (int i = 0; i < cfg.samples_per_gt; ++i) {
        if (auto clip = jitter(g.interval, cfg.train_jitter, video.duration, rng)) add(*clip);
      }
    }
    for (int i = 0; i < cfg.negatives_per_video; ++i) {
      const double len = std::min(rng.uniform(min_len, max_len), video.duration);
      const double s = rng.uniform(0.0, video.duration - len);
      add(Interval(s, s + len));
    }
    if (binary) {
      for (const auto& w : slide_windows(video.duration, cfg.windows)) {
        const auto label = label_clip(w, gts, cfg.pos_tiou, cfg.neg_tiou, true);
        if (label && label->class_id != kBackground) clips.push_back({v, w, *label});
      }
    }
  }
  return clips;
}

TrainingSet build_training_set(
    const std::vector<VideoFeatures>& videos, const std::vector<LabeledClip>& clips,
    const ReprSpec& spec,
    const std::function<const FeatureSequence&(const VideoFeatures&)>& stream) {
  if (clips.empty()) {
    throw DataError("no labeled training clips");
  }
  const FeatureSequence& first = stream(videos[clips.front().video]);
  TrainingSet set;
  set.features.resize(repr_output_dim(spec, first.dim()), static_cast<Eigen::Index>(clips.size()));
  set.labels.resize(clips.size());
  parallel_for(clips.size(), [&](std::size_t i) {
    const auto& clip = clips[i];
    set.features.col(static_cast<Eigen::Index>(i)) =
        extract(stream(videos[clip.video]).units, clip.interval, spec);
    set.labels[i] = clip.label;
  });
  return set;
}

StageResult train_tpg(const Dataset& data, const ExperimentConfig& cfg) {
  const auto clips = sample_training_clips(data.train, data.manifest, cfg, true,
                                           cfg.seed + kTpgSampleSeed);
  const TrainingSet set = build_training_set(
      data.train, clips, cfg.tpg_repr,
      [](const VideoFeatures& v) -> const FeatureSequence& { return v.fused; });
  TrainConfig tc = cfg.train_config(FusionMode::Early, kTpgTrainSeed);
  if (cfg.tpg_iterations >= 0) tc.iterations = cfg.tpg_iterations;
  Net init = Net::random(set.features.rows(), cfg.hidden, 1, cfg.seed + kTpgInitSeed);
  TrainResult tr = train(std::move(init), set, tc);
  StageResult r;
  r.train_accuracy = accuracy(tr.net, set);
  r.net = std::move(tr.net);
  r.loss_curve = std::move(tr.loss_curve);
  r.num_clips = clips.size();
  return r;
}

DetectorTraining train_det(const Dataset& data, const ExperimentConfig& cfg, FusionMode fusion) {
  const auto clips = sample_training_clips(data.train, data.manifest, cfg, false,
                                           cfg.seed + kDetSampleSeed);
  const int num_classes = data.manifest.num_classes;
  const auto train_stream = [&](FusionMode stream_mode, std::uint64_t index) {
    const TrainingSet set =
        build_training_set(data.train, clips, cfg.repr, [stream_mode](const VideoFeatures& v)
                               -> const FeatureSequence& { return stream_for(v, stream_mode); });
    Net init =
        Net::random(set.features.rows(), cfg.hidden, num_classes, cfg.seed + kDetInitSeed + index);
    TrainResult tr = train(std::move(init), set, cfg.train_config(fusion, kDetTrainSeed + index));
    StageResult r;
    r.train_accuracy = accuracy(tr.net, set);
    r.net = std::move(tr.net);
    r.loss_curve = std::move(tr.loss_curve);
    r.num_clips = clips.size();
    return r;
  };

  DetectorTraining out;
  out.model.fusion = fusion;
  out.model.spec = cfg.repr;
  if (fusion == FusionMode::Late) {
    out.stages.push_back(train_stream(FusionMode::RgbOnly, 0));
    out.stages.push_back(train_stream(FusionMode::FlowOnly, 1));
    out.model.primary = out.stages[0].net;
    out.model.flow = out.stages[1].net;
  } else {
    out.stages.push_back(train_stream(fusion, 0));
    out.model.primary = out.stages[0].net;
  }
  return out;
}

namespace {

ProposalSet scored_proposals(const std::vector<VideoFeatures>& videos, const Net& tpg,
                             const ExperimentConfig& cfg) {
  ProposalSet sets(videos.size());
  parallel_for(videos.size(), [&](std::size_t i) {
    const auto& v = videos[i];
    ProposalList list = score_proposals(v.fused, v.duration, slide_windows(v.duration, cfg.windows),
                                        tpg, cfg.tpg_repr);
    list.proposals = nms(std::move(list.proposals), cfg.proposal_nms);
    sets[i] = std::move(list);
  });
  return sets;
}

}  // namespace

ProposalSet generate_proposals(const std::vector<VideoFeatures>& videos, const Net& tpg,
                               const ExperimentConfig& cfg, double average_number) {
  return select_by_an(scored_proposals(videos, tpg, cfg), average_number).proposals;
}

ProposalSet jitter_proposals(const std::vector<VideoFeatures>& videos,
                             const DatasetManifest& manifest, double amount, int per_gt,
                             std::uint64_t seed) {
  Rng rng(seed);
  ProposalSet sets;
  for (const auto& v : videos) {
    ProposalList list{v.video_id, {}};
    for (const auto& g : manifest.annotations_for(v.video_id)) {
      for (int i = 0; i < per_gt; ++i) {
        if (auto clip = jitter(g.interval, amount, v.duration, rng)) {
          list.proposals.push_back({*clip, 1.0});
        }
      }
    }
    sets.push_back(std::move(list));
  }
  return sets;
}

std::vector<Detection> run_detection(const DetectorModel& model,
                                     const std::vector<VideoFeatures>& videos,
                                     const ProposalSet& proposals, const CascadeConfig& cascade,
                                     double nms_threshold) {
  std::map<std::string, const ProposalList*> by_video;
  for (const auto& list : proposals) by_video[list.video_id] = &list;
  std::vector<std::vector<Detection>> per_video(videos.size());
  parallel_for(videos.size(), [&](std::size_t i) {
    const auto it = by_video.find(videos[i].video_id);
    if (it == by_video.end()) return;
    per_video[i] = detect_video(model, videos[i], it->second->proposals, cascade, nms_threshold);
  });
  std::vector<Detection> all;
  for (auto& dets : per_video) {
    std::move(dets.begin(), dets.end(), std::back_inserter(all));
  }
  return all;
}

CascadeStudy study_cascade(const std::vector<Detection>& detections,
                           const std::vector<Annotation>& annotations, int num_classes,
                           double threshold) {
  CascadeStudy study;
  std::vector<double> sums;
  for (int c = 1; c <= num_classes; ++c) {
    for (const auto& m : assign_matches(detections, annotations, c, threshold)) {
      if (m.annotation < 0 || m.detection.step_intervals.empty()) continue;
      const Interval& gt = annotations[static_cast<std::size_t>(m.annotation)].interval;
      const auto& steps = m.detection.step_intervals;
      if (sums.size() < steps.size()) sums.resize(steps.size(), 0.0);
      std::vector<double> err;
      for (std::size_t t = 0; t < steps.size(); ++t) {
        err.push_back(std::abs(steps[t].start - gt.start) + std::abs(steps[t].end - gt.end));
        sums[t] += err.back();
      }
      ++study.true_positives;
      if (err.back() < err.front()) ++study.improved;
    }
  }
  for (double s : sums) {
    study.mean_error.push_back(study.true_positives ? s / study.true_positives : 0.0);
  }
  return study;
}

// --- ablation ---------------------------------------------------------------------

AblationAxis parse_axis(const std::string& text) {
  if (text == "k") return AblationAxis::K;
  if (text == "repr") return AblationAxis::Repr;
  if (text == "cascade") return AblationAxis::Cascade;
  if (text == "fusion") return AblationAxis::Fusion;
  if (text == "an") return AblationAxis::An;
  throw UsageError("unknown ablation axis '" + text + "' (k, repr, cascade, fusion, an)");
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::K: return "k";
    case AblationAxis::Repr: return "repr";
    case AblationAxis::Cascade: return "cascade";
    case AblationAxis::Fusion: return "fusion";
    case AblationAxis::An: return "an";
  }
  return "?";
}

namespace {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// Keys each axis is allowed to change.
std::set<std::string> axis_keys(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::K:
    case AblationAxis::Repr: return {"repr"};
    case AblationAxis::Cascade: return {"cascade_steps", "cascade_weights"};
    case AblationAxis::Fusion: return {"fusion"};
    case AblationAxis::An: return {"an"};
  }
  return {};
}

std::map<std::string, std::string> echo_map(const std::string& echo) {
  std::map<std::string, std::string> out;
  std::istringstream in(echo);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find(" = ");
    out[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return out;
}

void assert_single_axis(const std::vector<std::string>& echoes, AblationAxis axis) {
  const auto allowed = axis_keys(axis);
  const auto base = echo_map(echoes.front());
  for (const auto& e : echoes) {
    for (const auto& [key, value] : echo_map(e)) {
      if (!allowed.count(key) && base.at(key) != value) {
        throw UsageError("ablation changed '" + key + "' in addition to the swept axis");
      }
    }
  }
}

}  // namespace

AblationResult run_ablation(const Dataset& data, const ExperimentConfig& base, AblationAxis axis,
                            const std::function<void(const std::string&)>& log) {
  const auto note = [&](const std::string& msg) {
    if (log) log(msg);
  };
  const int num_classes = data.manifest.num_classes;
  const auto annotations = data.test_annotations();

  // Proposals are independent of every axis except AN.
  ProposalSet unselected;
  if (base.proposal_source == ProposalSource::Tpg) {
    note("training proposal network");
    const StageResult tpg = train_tpg(data, base);
    unselected = scored_proposals(data.test, tpg.net, base);
  } else {
    unselected = jitter_proposals(data.test, data.manifest, base.proposal_jitter,
                                  base.proposals_per_gt, base.seed + 301);
  }
  const auto proposals_for = [&](double an) {
    return base.proposal_source == ProposalSource::Tpg ? select_by_an(unselected, an).proposals
                                                       : unselected;
  };

  std::vector<std::pair<std::string, ExperimentConfig>> variants;
  switch (axis) {
    case AblationAxis::K:
      for (double k : base.ablate_k) {
        ExperimentConfig c = base;
        c.repr = ReprSpec{KPartPool{static_cast<int>(k)}, base.repr.n_ctx};
        variants.emplace_back(to_string(c.repr), c);
      }
      break;
    case AblationAxis::Repr:
      for (const auto& r : base.ablate_repr) {
        ExperimentConfig c = base;
        c.repr = parse_repr(r, base.repr.n_ctx);
        variants.emplace_back(to_string(c.repr), c);
      }
      break;
    case AblationAxis::Cascade:
      for (double s : base.ablate_steps) {
        ExperimentConfig c = base;
        c.cascade.steps = static_cast<int>(s);
        c.cascade.weights.clear();
        variants.emplace_back("steps=" + format_number(s), c);
      }
      break;
    case AblationAxis::Fusion:
      for (const auto& f : base.ablate_fusion) {
        ExperimentConfig c = base;
        c.fusion = parse_fusion(f);
        variants.emplace_back(f, c);
      }
      break;
    case AblationAxis::An:
      for (double an : base.ablate_an) {
        ExperimentConfig c = base;
        c.average_number = an;
        variants.emplace_back("AN=" + format_number(an), c);
      }
      break;
  }
  if (variants.empty()) {
    throw UsageError("ablation: no values for axis " + to_string(axis));
  }

  AblationResult result{axis, {}, {}};
  for (const auto& [_, c] : variants) result.config_echoes.push_back(c.echo());
  assert_single_axis(result.config_echoes, axis);

  const bool retrain = axis == AblationAxis::K || axis == AblationAxis::Repr ||
                       axis == AblationAxis::Fusion;
  std::optional<DetectorModel> shared;
  for (const auto& [label, c] : variants) {
    if (retrain || !shared) {
      note("training detector for " + label);
      shared = train_det(data, c, c.fusion).model;
    }
    note("detecting with " + label);
    const auto dets =
        run_detection(*shared, data.test, proposals_for(c.average_number), c.cascade, c.detection_nms);
    AblationRow row;
    row.value = label;
    row.report = map_at(dets, annotations, num_classes, c.thresholds);
    if (axis == AblationAxis::Cascade) {
      row.cascade = study_cascade(dets, annotations, num_classes, 0.5);
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

std::string format_ablation(const AblationResult& result) {
  std::ostringstream os;
  char cell[64];
  os << "axis: " << to_string(result.axis) << '\n';
  std::snprintf(cell, sizeof(cell), "%-14s", "setting");
  os << cell;
  for (double th : result.rows.front().report.thresholds) {
    std::snprintf(cell, sizeof(cell), " %7s", ("@" + format_number(th)).c_str());
    os << cell;
  }
  if (result.axis == AblationAxis::Cascade) os << "   TP@0.5  improved  mean boundary error per step";
  os << '\n';
  for (const auto& row : result.rows) {
    std::snprintf(cell, sizeof(cell), "%-14s", row.value.c_str());
    os << cell;
    for (double m : row.report.map) {
      std::snprintf(cell, sizeof(cell), " %7.2f", 100.0 * m);
      os << cell;
    }
    if (result.axis == AblationAxis::Cascade) {
      std::snprintf(cell, sizeof(cell), "   %6zu  %7.1f%% ", row.cascade.true_positives,
                    100.0 * row.cascade.improved_fraction());
      os << cell;
      for (double e : row.cascade.mean_error) {
        std::snprintf(cell, sizeof(cell), " %.3f", e);
        os << cell;
      }
    }
    os << '\n';
  }
  return os.str();
}

// --- run directory ----------------------------------------------------------------

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot hash '" + path.string() + "'");
  }
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ull;
    }
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw DataError("cannot write '" + path.string() + "'");
  }
  out << text;
}

std::string loss_curve_csv(const std::vector<LossPoint>& curve) {
  std::ostringstream os;
  os << "iteration,loss\n";
  char line[64];
  for (const auto& p : curve) {
    std::snprintf(line, sizeof(line), "%d,%.9g\n", p.iteration, p.loss);
    os << line;
  }
  return os.str();
}

}  // namespace talkit
