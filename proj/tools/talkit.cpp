// talkit: command-line front end for the temporal action localization
// toolkit. Every command is deterministic given its config and seed.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "talkit/config.hpp"
#include "talkit/pipeline.hpp"
#include "talkit/repr.hpp"

namespace fs = std::filesystem;
using namespace talkit;

namespace {

struct Overrides {
  std::optional<int> cascade_steps;
  std::optional<std::string> fusion;
  std::optional<double> an;
};

ExperimentConfig load_with(const std::string& path, const Overrides& o) {
  ExperimentConfig cfg = load_experiment(path);
  if (o.cascade_steps) {
    cfg.cascade.steps = *o.cascade_steps;
    if (static_cast<int>(cfg.cascade.weights.size()) != cfg.cascade.steps) cfg.cascade.weights.clear();
  }
  if (o.fusion) cfg.fusion = parse_fusion(*o.fusion);
  if (o.an) cfg.average_number = *o.an;
  cfg.cascade.validate();
  if (!fs::exists(cfg.manifest)) {
    throw UsageError("manifest '" + cfg.manifest.string() + "' does not exist");
  }
  return cfg;
}

void write_provenance(const fs::path& dir, const ExperimentConfig& cfg,
                      const std::vector<fs::path>& artifacts) {
  write_text(dir / "config.txt", cfg.echo());
  std::ostringstream os;
  for (const auto& a : artifacts) os << file_hash(a) << "  " << a.filename().string() << '\n';
  write_text(dir / "hashes.txt", os.str());
}

std::vector<fs::path> det_checkpoints(const fs::path& dir, FusionMode fusion) {
  if (fusion == FusionMode::Late) return {dir / "det.rgb.tln", dir / "det.flow.tln"};
  return {dir / "det.tln"};
}

int cmd_gen_synth(const std::string& cfg_path) {
  fs::path out;
  const SynthConfig cfg = load_synth_config(cfg_path, &out);
  const DatasetManifest m = generate_synthetic(cfg, out);
  std::cout << "wrote " << m.videos.size() << " videos, " << m.annotations.size()
            << " annotations to " << out.string() << "/manifest.json\n";
  return 0;
}

int cmd_train_tpg(const std::string& cfg_path, const Overrides& o) {
  const ExperimentConfig cfg = load_with(cfg_path, o);
  const Dataset data = load_dataset(cfg.manifest);
  const StageResult r = train_tpg(data, cfg);
  const fs::path dir = cfg.output_dir / "tpg";
  fs::create_directories(dir);
  save_checkpoint(dir / "tpg.tln", r.net);
  write_text(dir / "loss.csv", loss_curve_csv(r.loss_curve));
  write_provenance(dir, cfg, {dir / "tpg.tln"});
  std::printf("proposal net: %zu clips, train accuracy %.4f -> %s\n", r.num_clips,
              r.train_accuracy, (dir / "tpg.tln").string().c_str());
  return 0;
}

int cmd_train_det(const std::string& cfg_path, const Overrides& o) {
  const ExperimentConfig cfg = load_with(cfg_path, o);
  const Dataset data = load_dataset(cfg.manifest);
  const DetectorTraining t = train_det(data, cfg, cfg.fusion);
  const fs::path dir = cfg.output_dir / "det";
  fs::create_directories(dir);
  const auto paths = det_checkpoints(dir, cfg.fusion);
  for (std::size_t i = 0; i < paths.size(); ++i) {
    save_checkpoint(paths[i], t.stages[i].net);
    const std::string csv = paths.size() == 1 ? "loss.csv" : "loss." + std::to_string(i) + ".csv";
    write_text(dir / csv, loss_curve_csv(t.stages[i].loss_curve));
    std::printf("detection net %s: %zu clips, train accuracy %.4f\n",
                paths[i].filename().string().c_str(), t.stages[i].num_clips,
                t.stages[i].train_accuracy);
  }
  write_provenance(dir, cfg, paths);
  return 0;
}

ProposalSet make_proposals(const ExperimentConfig& cfg, const Dataset& data,
                           const std::string& tpg_path, const std::string& proposals_path) {
  if (!proposals_path.empty()) return load_proposals(proposals_path);
  if (cfg.proposal_source == ProposalSource::Jitter) {
    return jitter_proposals(data.test, data.manifest, cfg.proposal_jitter, cfg.proposals_per_gt,
                            cfg.seed + 301);
  }
  const fs::path ckpt = tpg_path.empty() ? cfg.output_dir / "tpg" / "tpg.tln" : fs::path(tpg_path);
  const Net tpg = load_checkpoint(ckpt);
  if (!data.test.empty() &&
      tpg.input_dim() != repr_output_dim(cfg.tpg_repr, data.test.front().fused.dim())) {
    throw DataError("proposal checkpoint input does not match tpg_repr " + to_string(cfg.tpg_repr));
  }
  return generate_proposals(data.test, tpg, cfg, cfg.average_number);
}

int cmd_propose(const std::string& cfg_path, const Overrides& o, const std::string& tpg_path) {
  const ExperimentConfig cfg = load_with(cfg_path, o);
  const Dataset data = load_dataset(cfg.manifest);
  const ProposalSet sets = make_proposals(cfg, data, tpg_path, "");
  const fs::path dir = cfg.output_dir / "propose";
  fs::create_directories(dir);
  save_proposals(dir / "proposals.jsonl", sets);
  write_provenance(dir, cfg, {dir / "proposals.jsonl"});
  std::size_t total = 0;
  for (const auto& l : sets) total += l.proposals.size();
  std::printf("%zu proposals over %zu videos -> %s\n", total, sets.size(),
              (dir / "proposals.jsonl").string().c_str());
  return 0;
}

int cmd_detect(const std::string& cfg_path, const Overrides& o, std::vector<std::string> ckpts,
               const std::string& tpg_path, const std::string& proposals_path) {
  const ExperimentConfig cfg = load_with(cfg_path, o);
  const Dataset data = load_dataset(cfg.manifest);
  if (ckpts.empty()) {
    for (const auto& p : det_checkpoints(cfg.output_dir / "det", cfg.fusion)) ckpts.push_back(p.string());
  }
  DetectorModel model;
  model.fusion = cfg.fusion;
  model.spec = cfg.repr;
  const std::size_t needed = cfg.fusion == FusionMode::Late ? 2 : 1;
  if (ckpts.size() != needed) {
    throw UsageError("fusion '" + to_string(cfg.fusion) + "' needs " + std::to_string(needed) +
                     " checkpoint(s)");
  }
  model.primary = load_checkpoint(ckpts[0]);
  if (needed == 2) model.flow = load_checkpoint(ckpts[1]);
  if (model.num_classes() != data.manifest.num_classes) {
    throw DataError("checkpoint class count does not match the manifest");
  }
  for (const auto& v : data.test) model.check(v);

  const ProposalSet proposals = make_proposals(cfg, data, tpg_path, proposals_path);
  const auto dets = run_detection(model, data.test, proposals, cfg.cascade, cfg.detection_nms);
  const fs::path dir = cfg.output_dir / "detect";
  fs::create_directories(dir);
  save_detections(dir / "detections.jsonl", dets);
  write_provenance(dir, cfg, {dir / "detections.jsonl"});
  std::printf("%zu detections -> %s\n", dets.size(), (dir / "detections.jsonl").string().c_str());
  return 0;
}

int emit_report(const EvalReport& report, const std::string& out_dir, double min_map) {
  std::cout << format_report_table(report);
  if (!out_dir.empty()) {
    write_text(fs::path(out_dir) / "report.txt", format_report_table(report));
    write_text(fs::path(out_dir) / "report.csv", format_report_csv(report));
  }
  if (min_map >= 0.0) {
    for (std::size_t t = 0; t < report.map.size(); ++t) {
      if (report.map[t] < min_map) {
        std::fprintf(stderr, "mAP@%.2f = %.4f below gate %.4f\n", report.thresholds[t],
                     report.map[t], min_map);
        return 3;
      }
    }
  }
  return 0;
}

int cmd_eval(const std::string& det_path, const std::string& ann_path,
             const std::string& manifest_path, int classes, std::vector<double> thresholds,
             double min_map, const std::string& out_dir) {
  const auto dets = load_detections(det_path);
  std::vector<Annotation> annotations;
  int num_classes = classes;
  if (!manifest_path.empty()) {
    const DatasetManifest m = load_manifest(manifest_path);
    for (const auto* v : m.subset("test")) {
      for (auto& a : m.annotations_for(v->video_id)) annotations.push_back(std::move(a));
    }
    if (num_classes <= 0) num_classes = m.num_classes;
  } else if (!ann_path.empty()) {
    annotations = load_annotations(ann_path);
  } else {
    throw UsageError("eval needs --annotations or --manifest");
  }
  if (num_classes <= 0) {
    for (const auto& a : annotations) num_classes = std::max(num_classes, a.class_id);
  }
  if (thresholds.empty()) thresholds = kDefaultThresholds;
  return emit_report(map_at(dets, annotations, num_classes, thresholds), out_dir, min_map);
}

int cmd_run(const std::string& cfg_path, const Overrides& o, double min_map) {
  const ExperimentConfig cfg = load_with(cfg_path, o);
  const Dataset data = load_dataset(cfg.manifest);
  ProposalSet proposals;
  if (cfg.proposal_source == ProposalSource::Tpg) {
    const StageResult tpg = train_tpg(data, cfg);
    proposals = generate_proposals(data.test, tpg.net, cfg, cfg.average_number);
  } else {
    proposals = jitter_proposals(data.test, data.manifest, cfg.proposal_jitter,
                                 cfg.proposals_per_gt, cfg.seed + 301);
  }
  const DetectorTraining det = train_det(data, cfg, cfg.fusion);
  const auto dets = run_detection(det.model, data.test, proposals, cfg.cascade, cfg.detection_nms);
  const fs::path dir = cfg.output_dir / "run";
  fs::create_directories(dir);
  save_detections(dir / "detections.jsonl", dets);
  const EvalReport report =
      map_at(dets, data.test_annotations(), data.manifest.num_classes, cfg.thresholds);
  const int rc = emit_report(report, dir.string(), min_map);
  write_provenance(dir, cfg, {dir / "detections.jsonl", dir / "report.csv"});
  return rc;
}

int cmd_ablate(const std::string& cfg_path, const std::string& axis_name) {
  const ExperimentConfig cfg = load_with(cfg_path, {});
  const AblationAxis axis = parse_axis(axis_name);
  const Dataset data = load_dataset(cfg.manifest);
  const AblationResult result =
      run_ablation(data, cfg, axis, [](const std::string& m) { std::cerr << m << '\n'; });
  const std::string text = format_ablation(result);
  std::cout << text;
  const fs::path dir = cfg.output_dir / ("ablate-" + axis_name);
  write_text(dir / "report.txt", text);
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    write_text(dir / ("row" + std::to_string(i) + ".csv"), format_report_csv(result.rows[i].report));
    write_text(dir / ("row" + std::to_string(i) + ".config.txt"), result.config_echoes[i]);
  }
  write_provenance(dir, cfg, {dir / "report.txt"});
  return 0;
}

int cmd_param_count(const std::vector<std::string>& specs, int dim, int classes, int hidden,
                    int n_ctx) {
  std::vector<ParamCountRow> rows;
  const auto add = [&](const ReprSpec& s) {
    rows.push_back({s, param_count(s, dim, classes, hidden)});
  };
  if (specs.empty()) {
    for (auto s : reference_table_specs()) {
      s.n_ctx = n_ctx;
      add(s);
    }
  } else {
    for (const auto& s : specs) add(parse_repr(s, n_ctx));
  }
  std::printf("d=%d C=%d hidden=%d n_ctx=%d\n", dim, classes, hidden, n_ctx);
  std::cout << format_param_table(rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"talkit: temporal action localization toolkit"};
  app.require_subcommand(1);

  std::string cfg_path;
  Overrides over;
  int steps = 0;
  std::string fusion;
  double an = -1;
  const auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--cascade-steps", steps, "override cascade_steps");
    sub->add_option("--fusion", fusion, "override fusion: rgb, flow, early, late");
    sub->add_option("--an", an, "override the average number of proposals");
  };

  auto* gen = app.add_subcommand("gen-synth", "generate a synthetic dataset");
  gen->add_option("config", cfg_path, "synthetic config file")->required();

  auto* ttpg = app.add_subcommand("train-tpg", "train the proposal network");
  ttpg->add_option("config", cfg_path)->required();
  add_overrides(ttpg);

  auto* tdet = app.add_subcommand("train-det", "train the detection network(s)");
  tdet->add_option("config", cfg_path)->required();
  add_overrides(tdet);

  std::string tpg_ckpt;
  std::string proposals_path;
  std::vector<std::string> det_ckpts;
  auto* prop = app.add_subcommand("propose", "dump proposals as JSON lines");
  prop->add_option("config", cfg_path)->required();
  prop->add_option("--tpg-checkpoint", tpg_ckpt);
  add_overrides(prop);

  auto* det = app.add_subcommand("detect", "run cascaded detection");
  det->add_option("config", cfg_path)->required();
  det->add_option("--checkpoint", det_ckpts, "detection checkpoint(s); rgb then flow for late");
  det->add_option("--tpg-checkpoint", tpg_ckpt);
  det->add_option("--proposals", proposals_path, "precomputed proposals (JSON lines)");
  add_overrides(det);

  std::string det_path;
  std::string ann_path;
  std::string manifest_path;
  std::string out_dir;
  int classes = 0;
  std::vector<double> thresholds;
  double min_map = -1;
  auto* ev = app.add_subcommand("eval", "mAP@tIoU report");
  ev->add_option("--detections", det_path)->required();
  ev->add_option("--annotations", ann_path, "ground truth JSON lines");
  ev->add_option("--manifest", manifest_path, "evaluate against the manifest's test subset");
  ev->add_option("--classes", classes);
  ev->add_option("--thresholds", thresholds)->delimiter(',');
  ev->add_option("--min-map", min_map, "exit 3 if any mAP falls below this value");
  ev->add_option("--out", out_dir, "write report.txt and report.csv here");

  auto* run = app.add_subcommand("run", "train, detect and evaluate in one go");
  run->add_option("config", cfg_path)->required();
  run->add_option("--min-map", min_map);
  add_overrides(run);

  std::string axis;
  auto* abl = app.add_subcommand("ablate", "sweep one axis");
  abl->add_option("config", cfg_path)->required();
  abl->add_option("--axis", axis, "k, repr, cascade, fusion, an")->required();

  std::vector<std::string> specs;
  int dim = 4096;
  int pc_classes = 20;
  int hidden = 1000;
  int n_ctx = 2;
  auto* pc = app.add_subcommand("param-count", "parameter counts per representation");
  pc->add_option("--spec", specs, "e.g. kpart:5, stpp:1,2,4, bsp:8/16/8 (repeatable)");
  pc->add_option("--dim", dim, "unit feature dimension");
  pc->add_option("--classes", pc_classes);
  pc->add_option("--hidden", hidden);
  pc->add_option("--n-ctx", n_ctx);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  if (steps > 0) over.cascade_steps = steps;
  if (!fusion.empty()) over.fusion = fusion;
  if (an > 0) over.an = an;

  try {
    if (gen->parsed()) return cmd_gen_synth(cfg_path);
    if (ttpg->parsed()) return cmd_train_tpg(cfg_path, over);
    if (tdet->parsed()) return cmd_train_det(cfg_path, over);
    if (prop->parsed()) return cmd_propose(cfg_path, over, tpg_ckpt);
    if (det->parsed()) return cmd_detect(cfg_path, over, det_ckpts, tpg_ckpt, proposals_path);
    if (ev->parsed()) {
      return cmd_eval(det_path, ann_path, manifest_path, classes, thresholds, min_map, out_dir);
    }
    if (run->parsed()) return cmd_run(cfg_path, over, min_map);
    if (abl->parsed()) return cmd_ablate(cfg_path, axis);
    if (pc->parsed()) return cmd_param_count(specs, dim, pc_classes, hidden, n_ctx);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
