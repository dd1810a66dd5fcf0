// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Usage: acceptance <work_dir>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "support.hpp"
#include "talkit/pipeline.hpp"
#include "talkit/repr.hpp"

namespace fs = std::filesystem;
using namespace talkit;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path g_work;
const fs::path g_src = TALKIT_SOURCE_DIR;

// Loads a shipped experiment config, rebased so that its relative paths land
// inside the work directory.
ExperimentConfig shipped_experiment(const std::string& name) {
  KeyValueFile kv = KeyValueFile::load(g_src / "configs" / name);
  return parse_experiment(kv, g_work / "configs");
}

const Dataset& synthetic_dataset() {
  static const Dataset data = [] {
    fs::path out;
    const SynthConfig cfg = load_synth_config(g_src / "configs" / "synth.cfg", &out);
    const fs::path dir = g_work / "data" / "synth";
    generate_synthetic(cfg, dir);
    return load_dataset(dir / "manifest.json");
  }();
  return data;
}

// 1 -------------------------------------------------------------------------------
Outcome table3() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<double> paper{20.54, 36.93, 41.02, 73.79, 139.33, 20.54, 28.74, 49.22};
  std::vector<ParamCountRow> rows;
  for (const auto& s : reference_table_specs()) rows.push_back({s, param_count(s, 4096, 20, 1000)});
  const std::string table = format_param_table(rows);
  const double secs = seconds_since(t0);
  double worst = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    worst = std::max(worst, std::abs(rows[i].params / 1e6 - paper[i]));
    if (table.find(fmt("%.2f", paper[i])) == std::string::npos) {
      return {false, fmt("%.2f missing from table", paper[i])};
    }
  }
  return {worst <= 0.01 && secs < 1.0,
          fmt("8/8 columns, max |diff| %.4fM (tol 0.01M), %.3fs", worst, secs)};
}

// 2 -------------------------------------------------------------------------------
Outcome reductions() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 5 + static_cast<int>(rng.below(60));
    const int d = 1 + static_cast<int>(rng.below(8));
    Eigen::MatrixXf u(n, d);
    for (Eigen::Index i = 0; i < u.size(); ++i) u.data()[i] = static_cast<float>(rng.uniform(-3, 3));
    const double s = rng.uniform(0, n - 1);
    const Interval iv(s, s + rng.uniform(0.01, n - s));
    worst = std::max(worst, static_cast<double>(
                                (kpart_pool(u, iv, 1, 0) - global_avg_pool(u, iv)).cwiseAbs().maxCoeff()));
    for (int ctx : {0, 2}) {
      worst = std::max(worst, static_cast<double>(
                                  (stpp(u, iv, {1}, ctx) - kpart_pool(u, iv, 1, ctx)).cwiseAbs().maxCoeff()));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 1.0,
          fmt("100 sequences, max |diff| %.2e (tol 1e-6), %.3fs", worst, secs)};
}

// 3 -------------------------------------------------------------------------------
Outcome order_sensitivity() {
  SynthConfig cfg = load_synth_config(g_src / "configs" / "synth.cfg", nullptr);
  cfg.noise = 0.0;
  const fs::path dir = g_work / "data" / "synth_clean";
  const DatasetManifest m = generate_synthetic(cfg, dir);
  const Dataset data = load_dataset(dir / "manifest.json");
  std::map<std::string, const VideoFeatures*> videos;
  for (const auto* set : {&data.train, &data.test}) {
    for (const auto& v : *set) videos[v.video_id] = &v;
  }
  struct Feat {
    int cls;
    Eigen::VectorXf global;
    std::vector<Eigen::VectorXf> parts;  // k = 2, 3, 5
  };
  std::vector<Feat> feats;
  for (const auto& a : m.annotations) {
    const auto& units = videos.at(a.video_id)->fused.units;
    Feat f{a.class_id, global_avg_pool(units, a.interval), {}};
    for (int k : {2, 3, 5}) f.parts.push_back(kpart_pool(units, a.interval, k, 0));
    feats.push_back(std::move(f));
  }
  double worst_global = 0, min_parts = 1e30;
  long pairs = 0;
  for (const auto& x : feats) {
    const int partner = reversed_partner(x.cls, cfg.num_classes);
    if (partner == x.cls || x.cls % 2 == 0) continue;
    for (const auto& y : feats) {
      if (y.cls != partner) continue;
      ++pairs;
      worst_global = std::max(worst_global, static_cast<double>((x.global - y.global).cwiseAbs().maxCoeff()));
      for (std::size_t k = 0; k < x.parts.size(); ++k) {
        min_parts = std::min(min_parts, static_cast<double>((x.parts[k] - y.parts[k]).cwiseAbs().maxCoeff()));
      }
    }
  }
  return {pairs > 0 && worst_global <= 1e-6 && min_parts >= 0.1,
          fmt("%ld reversed pairs: global max L_inf %.2e (tol 1e-6), k-part min L_inf %.3f (need >= 0.1)",
              pairs, worst_global, min_parts)};
}

// 4 -------------------------------------------------------------------------------
Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  std::int64_t max_params = 0;
  int redraws = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = oracle::check_gradients(seed, 10, 12, 3, 8);
    worst = std::max(worst, r.max_rel_error);
    max_params = std::max(max_params, r.params);
    redraws += r.redraws;
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && max_params <= 1000 && secs < 10.0,
          fmt("10 nets of %lld params, eps 1e-3, max rel error %.2e (tol 1e-4), %d draws "
              "redrawn for sitting within finite-difference reach of a kink, %.2fs",
              static_cast<long long>(max_params), worst, redraws, secs)};
}

// 5 -------------------------------------------------------------------------------
Outcome evaluation_oracle() {
  Rng rng(55);
  const std::vector<double> ths{0.1, 0.3, 0.4, 0.5, 0.6, 0.7, 0.9};
  int flag_mismatch = 0, monotone_violations = 0;
  double worst_ap = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const char* videos[] = {"a", "b", "c"};
    std::vector<Annotation> gts;
    std::vector<Detection> dets;
    const int n_gt = 1 + static_cast<int>(rng.below(15));
    for (int i = 0; i < n_gt; ++i) {
      const double s = std::floor(rng.uniform(0, 30));
      gts.push_back({videos[rng.below(3)], 1 + static_cast<int>(rng.below(3)),
                     Interval(s, s + 1 + std::floor(rng.uniform(0, 8)))});
    }
    const int n_det = static_cast<int>(rng.below(31));
    for (int i = 0; i < n_det; ++i) {
      Detection d;
      if (rng.uniform() < 0.6) {
        const Annotation& g = gts[rng.below(gts.size())];
        const double s = std::max(0.0, g.interval.start + rng.uniform(-2, 2));
        d = {g.video_id, Interval(s, std::max(s + 0.5, g.interval.end + rng.uniform(-2, 2))),
             rng.uniform() < 0.8 ? g.class_id : 1 + static_cast<int>(rng.below(3)), 0, {}, {}};
      } else {
        const double s = rng.uniform(0, 30);
        d = {videos[rng.below(3)], Interval(s, s + rng.uniform(0.5, 8)),
             1 + static_cast<int>(rng.below(3)), 0, {}, {}};
      }
      d.score = static_cast<double>(rng.below(8)) / 7;
      dets.push_back(d);
    }
    std::vector<oracle::BruteDet> bd;
    for (const auto& d : dets) bd.push_back({d.video_id, d.class_id, d.interval.start, d.interval.end, d.score});
    std::vector<oracle::BruteGt> bg;
    for (const auto& g : gts) bg.push_back({g.video_id, g.class_id, g.interval.start, g.interval.end});

    const EvalReport r = map_at(dets, gts, 3, ths);
    for (std::size_t t = 0; t < ths.size(); ++t) {
      for (int c = 1; c <= 3; ++c) {
        const auto flags = match_detections(dets, gts, c, ths[t]);
        if (flags != oracle::brute_flags(bd, bg, c, ths[t])) ++flag_mismatch;
        int num_gt = 0;
        for (const auto& g : gts) num_gt += g.class_id == c;
        if (num_gt > 0) {
          worst_ap = std::max(worst_ap, std::abs(*r.ap[t][static_cast<std::size_t>(c - 1)] -
                                                 oracle::brute_ap(flags, num_gt)));
        }
      }
      worst_ap = std::max(worst_ap, std::abs(r.map[t] - oracle::brute_map(bd, bg, 3, ths[t])));
      if (t > 0 && r.map[t] > r.map[t - 1]) ++monotone_violations;
    }
  }
  return {flag_mismatch == 0 && worst_ap <= 1e-9 && monotone_violations == 0,
          fmt("200 instances: %d flag mismatches, max AP diff %.1e (tol 1e-9), %d monotonicity violations",
              flag_mismatch, worst_ap, monotone_violations)};
}

// 6 -------------------------------------------------------------------------------
Outcome nms_oracle() {
  Rng rng(66);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Proposal> items;
    for (int i = 0; i < 50; ++i) {
      const double s = std::floor(rng.uniform(0, 60) * 4) / 4;
      const double score = trial % 2 ? rng.uniform() : static_cast<double>(rng.below(6)) / 5;
      items.push_back({Interval(s, s + 0.25 + std::floor(rng.uniform(0, 20) * 4) / 4), score});
    }
    const double th = rng.uniform(0.05, 0.95);
    const auto got = nms(items, th);
    const auto want = oracle::nms_reference(items, th);
    bool same = got.size() == want.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      same = got[i].interval == want[i].interval && got[i].score == want[i].score;
    }
    mismatches += !same;
  }
  return {mismatches == 0, fmt("200 lists of 50: %d mismatches", mismatches)};
}

// 7 -------------------------------------------------------------------------------
Outcome representation_ablation() {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset& data = synthetic_dataset();
  ExperimentConfig cfg = shipped_experiment("experiment.cfg");
  cfg.ablate_k = {1, 5};
  const AblationResult r = run_ablation(data, cfg, AblationAxis::K);
  const double secs = seconds_since(t0);
  std::printf("%s", format_ablation(r).c_str());
  const double k1 = r.rows[0].report.map_at(0.5);
  const double k5 = r.rows[1].report.map_at(0.5);
  return {k5 - k1 >= 0.20 && secs < 300.0,
          fmt("mAP@0.5 k=5 %.2f vs k=1 %.2f: +%.2f points (need >= 20), %.1fs on %s thread(s)",
              100 * k5, 100 * k1, 100 * (k5 - k1), secs, std::getenv("TALKIT_THREADS"))};
}

// 8 -------------------------------------------------------------------------------
Outcome cascade_ablation() {
  const Dataset& data = synthetic_dataset();
  ExperimentConfig cfg = shipped_experiment("cascade.cfg");
  cfg.ablate_steps = {1, 3};
  const AblationResult r = run_ablation(data, cfg, AblationAxis::Cascade);
  std::printf("%s", format_ablation(r).c_str());
  const double one = r.rows[0].report.map_at(0.5);
  const double three = r.rows[1].report.map_at(0.5);
  const double improved = r.rows[1].cascade.improved_fraction();
  return {three >= one + 0.05 && improved >= 0.80,
          fmt("mAP@0.5 steps=3 %.2f vs steps=1 %.2f: +%.2f points (need >= 5); boundary error "
              "falls step 1 -> 3 on %.1f%% of %zu TPs (need >= 80%%)",
              100 * three, 100 * one, 100 * (three - one), 100 * improved,
              r.rows[1].cascade.true_positives)};
}

// 9 -------------------------------------------------------------------------------
Outcome invariants() {
  const Dataset& data = synthetic_dataset();
  const VideoFeatures& v = data.test.front();
  const ReprSpec spec = parse_repr("kpart:5", 2);
  Rng rng(9);
  int fixed_fail = 0, single_fail = 0, late_fail = 0, checks = 0;

  DetectorModel zero;
  zero.fusion = FusionMode::Early;
  zero.spec = spec;
  zero.primary = Net::random(repr_output_dim(spec, v.fused.dim()), 32, 4, 1);
  for (Eigen::Index c = 0; c < zero.primary.output_dim(); ++c) {
    if (c % 3 == 0) continue;
    zero.primary.w2.col(c).setZero();
    zero.primary.b2[c] = 0.0f;
  }
  DetectorModel plain = zero;
  plain.primary = Net::random(repr_output_dim(spec, v.fused.dim()), 32, 4, 2);

  VideoFeatures twin = v;
  twin.flow = twin.rgb;
  DetectorModel late;
  late.fusion = FusionMode::Late;
  late.spec = spec;
  late.primary = Net::random(repr_output_dim(spec, v.rgb.dim()), 32, 4, 3);
  late.flow = late.primary;
  DetectorModel rgb_only = late;
  rgb_only.fusion = FusionMode::RgbOnly;
  rgb_only.flow.reset();

  for (int trial = 0; trial < 200; ++trial) {
    const double s = rng.uniform(0, v.duration - 2);
    const Interval iv(s, s + rng.uniform(1, std::min(40.0, v.duration - s)));
    ++checks;
    for (int steps : {1, 2, 3, 7}) {
      CascadeConfig c;
      c.steps = steps;
      const ClipResult r = detect_clip(zero, v, iv, c);
      for (const auto& step : r.intervals) fixed_fail += !(step == iv);
      fixed_fail += r.intervals.size() != static_cast<std::size_t>(steps);
    }
    CascadeConfig one;
    one.steps = 1;
    const ClipResult r1 = detect_clip(plain, v, iv, one);
    const Decision<float> d = decide(forward(plain.primary, extract(v.fused.units, iv, spec)));
    Eigen::Index cls = 0;
    d.probs.tail(d.probs.size() - 1).maxCoeff(&cls);
    ++cls;
    const double es = std::clamp(iv.start + d.offsets(cls, 0), 0.0, v.duration);
    const double ee = std::clamp(iv.end + d.offsets(cls, 1), 0.0, v.duration);
    if (r1.steps.size() != 1 || r1.steps[0].probs != d.probs || r1.steps[0].offsets != d.offsets) {
      ++single_fail;
    } else if (!r1.collapsed && !(r1.intervals[0] == Interval(es, ee))) {
      ++single_fail;
    } else if (r1.detection && r1.detection->score != static_cast<double>(d.probs[r1.detection->class_id])) {
      ++single_fail;
    }
    CascadeConfig three;
    const ClipResult a = detect_clip(late, twin, iv, three);
    const ClipResult b = detect_clip(rgb_only, twin, iv, three);
    bool same = a.steps.size() == b.steps.size() && a.intervals == b.intervals &&
                a.detection.has_value() == b.detection.has_value();
    for (std::size_t i = 0; same && i < a.steps.size(); ++i) {
      same = a.steps[i].probs == b.steps[i].probs && a.steps[i].offsets == b.steps[i].offsets;
    }
    if (same && a.detection) same = a.detection->score == b.detection->score;
    late_fail += !same;
  }
  return {fixed_fail == 0 && single_fail == 0 && late_fail == 0,
          fmt("%d intervals: fixed-point failures %d, steps=1 vs forward %d, late(identical) vs "
              "single %d",
              checks, fixed_fail, single_fail, late_fail)};
}

// 10 ------------------------------------------------------------------------------
int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + TALKIT_CLI + "\" " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = testing::read_bytes(e.path());
  }
  return out;
}

Outcome determinism() {
  const fs::path dir = g_work / "determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream(dir / "synth.cfg") << "num_videos = 12\nunits_per_video = 100\nseed = 4\n"
                                        "output_dir = data\n";
    std::ofstream(dir / "exp.cfg") << "manifest = data/manifest.json\noutput_dir = run\nseed = 9\n"
                                      "hidden = 24\niterations = 300\nlr_decay_step = 200\n"
                                      "window_lengths = 4,8,16,32\nan = 40\n";
  }
  const std::vector<std::string> commands{
      "gen-synth " + (dir / "synth.cfg").string(),
      "train-tpg " + (dir / "exp.cfg").string(),
      "train-det " + (dir / "exp.cfg").string(),
      "propose " + (dir / "exp.cfg").string(),
      "detect " + (dir / "exp.cfg").string(),
      "eval --detections " + (dir / "run/detect/detections.jsonl").string() + " --manifest " +
          (dir / "data/manifest.json").string() + " --out " + (dir / "run/eval").string(),
      "ablate " + (dir / "exp.cfg").string() + " --axis an"};
  std::vector<std::map<std::string, std::string>> runs;
  for (int rep = 0; rep < 2; ++rep) {
    fs::remove_all(dir / "data");
    fs::remove_all(dir / "run");
    fs::create_directories(dir / "run/eval");
    for (const auto& c : commands) {
      if (const int rc = run_cli(c); rc != 0) return {false, "command failed: talkit " + c};
    }
    auto snap = snapshot(dir / "run");
    for (auto& [k, v] : snapshot(dir / "data")) snap["data/" + k] = v;
    runs.push_back(std::move(snap));
  }
  int differing = 0;
  for (const auto& [name, bytes] : runs[0]) {
    const auto it = runs[1].find(name);
    differing += it == runs[1].end() || it->second != bytes;
  }
  differing += runs[0].size() != runs[1].size();
  return {differing == 0 && runs[0].size() > 10,
          fmt("%zu artifacts from 7 commands (features, checkpoints, proposals, detections, "
              "reports) rerun: %d differ",
              runs[0].size(), differing)};
}

}  // namespace

int main(int argc, char** argv) {
  g_work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "talkit_acceptance";
  fs::remove_all(g_work);
  fs::create_directories(g_work / "configs");
  setenv("TALKIT_THREADS", "1", 0);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 parameter table", table3},
      {"2 representation reductions", reductions},
      {"3 order sensitivity", order_sensitivity},
      {"4 gradient check", gradients},
      {"5 evaluation oracle", evaluation_oracle},
      {"6 nms oracle", nms_oracle},
      {"7 ablation k=5 vs global", representation_ablation},
      {"8 ablation cascade steps", cascade_ablation},
      {"9 cascade and fusion invariants", invariants},
      {"10 determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
