#include "talkit/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace talkit {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw UsageError("config: '" + key + "' expects a number");
  return out;
}

std::string join(const std::vector<double>& v, const char* sep = ",") {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
    out += buf;
  }
  return out;
}

std::string join(const std::vector<std::string>& v, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& origin) {
  KeyValueFile kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;  // blank or TOML section header
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw UsageError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    if (!kv.values_.emplace(key, unquote(trim(line.substr(eq + 1)))).second) {
      throw UsageError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw UsageError("cannot read config '" + path.string() + "'");
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

std::string KeyValueFile::get(const std::string& key, const std::string& fallback) {
  read_[key] = true;
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValueFile::get(const std::string& key, double fallback) {
  read_[key] = true;
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : to_double(key, it->second);
}

int KeyValueFile::get(const std::string& key, int fallback) {
  const double v = get(key, static_cast<double>(fallback));
  if (v != static_cast<double>(static_cast<int>(v))) {
    throw UsageError("config: '" + key + "' expects an integer");
  }
  return static_cast<int>(v);
}

std::uint64_t KeyValueFile::get(const std::string& key, std::uint64_t fallback) {
  read_[key] = true;
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(it->second, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != it->second.size()) {
    throw UsageError("config: '" + key + "' expects a non-negative integer");
  }
  return out;
}

bool KeyValueFile::get(const std::string& key, bool fallback) {
  const std::string v = get(key, std::string(fallback ? "true" : "false"));
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw UsageError("config: '" + key + "' expects true/false");
}

std::vector<double> KeyValueFile::get_list(const std::string& key,
                                           const std::vector<double>& fallback) {
  read_[key] = true;
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  std::string text = it->second;
  if (!text.empty() && text.front() == '[' && text.back() == ']') {
    text = text.substr(1, text.size() - 2);
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_double(key, item));
  }
  return out;
}

std::vector<std::string> KeyValueFile::get_strings(const std::string& key, char sep,
                                                   const std::vector<std::string>& fallback) {
  read_[key] = true;
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::string> out;
  std::stringstream ss(it->second);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void KeyValueFile::finish() const {
  for (const auto& [key, _] : values_) {
    if (!read_.count(key)) {
      throw UsageError(origin_ + ": unknown key '" + key + "'");
    }
  }
}

SynthConfig load_synth_config(const fs::path& path, fs::path* output_dir) {
  KeyValueFile kv = KeyValueFile::load(path);
  SynthConfig c;
  c.num_videos = kv.get("num_videos", c.num_videos);
  c.units_per_video = kv.get("units_per_video", c.units_per_video);
  c.dim = kv.get("dim", c.dim);
  c.num_classes = kv.get("num_classes", c.num_classes);
  c.actions_per_video = kv.get("actions_per_video", c.actions_per_video);
  c.min_length = kv.get("min_length", c.min_length);
  c.max_length = kv.get("max_length", c.max_length);
  c.noise = kv.get("noise", c.noise);
  c.rgb_scale = kv.get("rgb_scale", c.rgb_scale);
  c.test_fraction = kv.get("test_fraction", c.test_fraction);
  if (!kv.has("seed")) {
    throw UsageError(path.string() + ": 'seed' is mandatory");
  }
  c.seed = kv.get("seed", c.seed);
  const std::string out = kv.get("output_dir", std::string("data/synth"));
  if (output_dir) {
    const fs::path p(out);
    *output_dir = p.is_absolute() ? p : path.parent_path() / p;
  }
  kv.finish();
  c.validate();
  return c;
}

double ExperimentConfig::learning_rate_for(FusionMode mode) const {
  return mode == FusionMode::Early ? lr_two_stream : lr_single_stream;
}

TrainConfig ExperimentConfig::train_config(FusionMode mode, std::uint64_t seed_offset) const {
  TrainConfig t = train;
  t.learning_rate = learning_rate_for(mode);
  t.seed = seed + seed_offset;
  return t;
}

ExperimentConfig parse_experiment(KeyValueFile& kv, const fs::path& base_dir) {
  ExperimentConfig c;
  const auto resolve = [&](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  const std::string manifest = kv.get("manifest", std::string());
  if (manifest.empty()) {
    throw UsageError("config: 'manifest' is mandatory");
  }
  c.manifest = resolve(manifest);
  c.output_dir = resolve(kv.get("output_dir", c.output_dir.string()));
  if (!kv.has("seed")) {
    throw UsageError("config: 'seed' is mandatory");
  }
  c.seed = kv.get("seed", c.seed);
  c.seed_set = true;

  const int n_ctx = kv.get("n_ctx", c.repr.n_ctx);
  c.repr = parse_repr(kv.get("repr", to_string(c.repr)), n_ctx);
  c.tpg_repr = parse_repr(kv.get("tpg_repr", to_string(c.tpg_repr)), n_ctx);
  c.hidden = kv.get("hidden", c.hidden);

  c.train.batch_size = kv.get("batch_size", c.train.batch_size);
  c.train.iterations = kv.get("iterations", c.train.iterations);
  c.train.lr_decay_step = kv.get("lr_decay_step", c.train.lr_decay_step);
  c.train.lr_decay_factor = kv.get("lr_decay_factor", c.train.lr_decay_factor);
  c.train.momentum = kv.get("momentum", c.train.momentum);
  c.train.reg_weight = kv.get("reg_weight", c.train.reg_weight);
  c.train.log_every = kv.get("log_every", c.train.log_every);
  c.lr_two_stream = kv.get("lr_two_stream", c.lr_two_stream);
  c.lr_single_stream = kv.get("lr_single_stream", c.lr_single_stream);
  c.pos_tiou = kv.get("pos_tiou", c.pos_tiou);
  c.neg_tiou = kv.get("neg_tiou", c.neg_tiou);
  c.samples_per_gt = kv.get("samples_per_gt", c.samples_per_gt);
  c.train_jitter = kv.get("train_jitter", c.train_jitter);
  c.negatives_per_video = kv.get("negatives_per_video", c.negatives_per_video);
  c.tpg_iterations = kv.get("tpg_iterations", c.tpg_iterations);

  c.windows.lengths = kv.get_list("window_lengths", c.windows.lengths);
  c.windows.stride = kv.get("window_stride", c.windows.stride);
  c.average_number = kv.get("an", c.average_number);
  c.proposal_nms = kv.get("proposal_nms", c.proposal_nms);
  c.detection_nms = kv.get("detection_nms", c.detection_nms);
  c.cascade.steps = kv.get("cascade_steps", c.cascade.steps);
  c.cascade.weights = kv.get_list("cascade_weights", c.cascade.weights);
  c.cascade.clamp_to_video = kv.get("cascade_clamp", c.cascade.clamp_to_video);
  c.fusion = parse_fusion(kv.get("fusion", to_string(c.fusion)));
  c.thresholds = kv.get_list("thresholds", c.thresholds);

  const std::string source = kv.get("proposal_source", std::string("tpg"));
  if (source == "tpg") {
    c.proposal_source = ProposalSource::Tpg;
  } else if (source == "jitter") {
    c.proposal_source = ProposalSource::Jitter;
  } else {
    throw UsageError("config: proposal_source must be tpg or jitter");
  }
  c.proposal_jitter = kv.get("proposal_jitter", c.proposal_jitter);
  c.proposals_per_gt = kv.get("proposals_per_gt", c.proposals_per_gt);

  c.ablate_k = kv.get_list("ablate_k", c.ablate_k);
  c.ablate_repr = kv.get_strings("ablate_repr", ';', c.ablate_repr);
  c.ablate_steps = kv.get_list("ablate_steps", c.ablate_steps);
  c.ablate_fusion = kv.get_strings("ablate_fusion", ',', c.ablate_fusion);
  c.ablate_an = kv.get_list("ablate_an", c.ablate_an);

  kv.finish();
  c.train.validate();
  c.windows.validate();
  c.cascade.validate();
  if (c.hidden < 1 || c.samples_per_gt < 0 || c.negatives_per_video < 0 ||
      c.proposals_per_gt < 1) {
    throw UsageError("config: counts must be positive");
  }
  if (!(c.neg_tiou <= c.pos_tiou) || !(c.lr_two_stream > 0) || !(c.lr_single_stream > 0)) {
    throw UsageError("config: need neg_tiou <= pos_tiou and positive learning rates");
  }
  return c;
}

ExperimentConfig load_experiment(const fs::path& path) {
  KeyValueFile kv = KeyValueFile::load(path);
  return parse_experiment(kv, path.parent_path());
}

std::string ExperimentConfig::echo() const {
  std::ostringstream os;
  const auto line = [&os](const char* key, const std::string& value) {
    os << key << " = " << value << '\n';
  };
  const auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  line("manifest", manifest.string());
  line("output_dir", output_dir.string());
  line("seed", std::to_string(seed));
  line("repr", to_string(repr));
  line("tpg_repr", to_string(tpg_repr));
  line("n_ctx", std::to_string(repr.n_ctx));
  line("hidden", std::to_string(hidden));
  line("batch_size", std::to_string(train.batch_size));
  line("iterations", std::to_string(train.iterations));
  line("tpg_iterations", std::to_string(tpg_iterations));
  line("lr_two_stream", num(lr_two_stream));
  line("lr_single_stream", num(lr_single_stream));
  line("lr_decay_step", std::to_string(train.lr_decay_step));
  line("lr_decay_factor", num(train.lr_decay_factor));
  line("momentum", num(train.momentum));
  line("reg_weight", num(train.reg_weight));
  line("log_every", std::to_string(train.log_every));
  line("pos_tiou", num(pos_tiou));
  line("neg_tiou", num(neg_tiou));
  line("samples_per_gt", std::to_string(samples_per_gt));
  line("train_jitter", num(train_jitter));
  line("negatives_per_video", std::to_string(negatives_per_video));
  line("window_lengths", join(windows.lengths));
  line("window_stride", num(windows.stride));
  line("an", num(average_number));
  line("proposal_nms", num(proposal_nms));
  line("detection_nms", num(detection_nms));
  line("cascade_steps", std::to_string(cascade.steps));
  line("cascade_weights", join(cascade.weights));
  line("cascade_clamp", cascade.clamp_to_video ? "true" : "false");
  line("fusion", to_string(fusion));
  line("thresholds", join(thresholds));
  line("proposal_source", proposal_source == ProposalSource::Tpg ? "tpg" : "jitter");
  line("proposal_jitter", num(proposal_jitter));
  line("proposals_per_gt", std::to_string(proposals_per_gt));
  line("ablate_k", join(ablate_k));
  line("ablate_repr", join(ablate_repr, ";"));
  line("ablate_steps", join(ablate_steps));
  line("ablate_fusion", join(ablate_fusion, ","));
  line("ablate_an", join(ablate_an));
  return os.str();
}

}  // namespace talkit
