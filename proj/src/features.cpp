#include "talkit/features.hpp"

#include <json.hpp>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <sstream>

#include "talkit/rng.hpp"

namespace talkit {

namespace fs = std::filesystem;
using nlohmann::json;

FeatureSequence::FeatureSequence(std::string id, UnitMatrix u)
    : video_id(std::move(id)), units(std::move(u)) {
  if (units.rows() < 1) {
    throw DataError("feature sequence '" + video_id + "' has no units");
  }
  if (units.cols() < 1) {
    throw DataError("feature sequence '" + video_id + "' has zero dimension");
  }
}

namespace {

constexpr std::array<char, 4> kMagic{'U', 'F', 'T', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
         (std::uint32_t{p[3]} << 24);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open '" + path.string() + "'");
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string stem_without_stream(const fs::path& path) {
  std::string name = path.filename().string();
  for (const char* suffix : {".rgb.uft", ".flow.uft", ".uft"}) {
    const std::string s(suffix);
    if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) {
      return name.substr(0, name.size() - s.size());
    }
  }
  return name;
}

}  // namespace

void save_features(const fs::path& path, const FeatureSequence& seq) {
  std::string buf;
  buf.reserve(12 + 4 * static_cast<std::size_t>(seq.units.size()));
  buf.append(kMagic.data(), kMagic.size());
  put_u32(buf, static_cast<std::uint32_t>(seq.size()));
  put_u32(buf, static_cast<std::uint32_t>(seq.dim()));
  const float* data = seq.units.data();
  for (Eigen::Index i = 0; i < seq.units.size(); ++i) {
    put_u32(buf, std::bit_cast<std::uint32_t>(data[i]));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot write '" + path.string() + "'");
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

FeatureSequence load_features(const fs::path& path, std::string video_id) {
  const std::string buf = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
  if (buf.size() < 12 || std::memcmp(buf.data(), kMagic.data(), 4) != 0) {
    throw DataError("'" + path.string() + "': bad magic (expected UFT1)");
  }
  const std::uint32_t n = get_u32(p + 4);
  const std::uint32_t d = get_u32(p + 8);
  if (n == 0 || d == 0) {
    throw DataError("'" + path.string() + "': header declares an empty matrix");
  }
  const std::uint64_t expected = 12 + 4ull * n * d;
  if (buf.size() < expected) {
    std::ostringstream os;
    os << "'" << path.string() << "': truncated payload (" << (buf.size() - 12) / 4 << " of "
       << std::uint64_t{n} * d << " values)";
    throw DataError(os.str());
  }
  if (buf.size() > expected) {
    throw DataError("'" + path.string() + "': trailing bytes after declared n*d values");
  }
  UnitMatrix units(n, d);
  float* data = units.data();
  for (std::uint64_t i = 0; i < std::uint64_t{n} * d; ++i) {
    data[i] = std::bit_cast<float>(get_u32(p + 12 + 4 * i));
  }
  if (!units.allFinite()) {
    throw DataError("'" + path.string() + "': non-finite feature values");
  }
  if (video_id.empty()) {
    video_id = stem_without_stream(path);
  }
  return {std::move(video_id), std::move(units)};
}

std::vector<Annotation> load_annotations(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open annotations '" + path.string() + "'");
  }
  std::vector<Annotation> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      Annotation a;
      a.video_id = j.at("video_id").get<std::string>();
      a.class_id = j.at("class_id").get<int>();
      a.interval = Interval(j.at("start_unit").get<double>(), j.at("end_unit").get<double>());
      out.push_back(std::move(a));
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_annotations(const fs::path& path, const std::vector<Annotation>& annotations) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw DataError("cannot write '" + path.string() + "'");
  }
  for (const auto& a : annotations) {
    json j = {{"video_id", a.video_id},
              {"class_id", a.class_id},
              {"start_unit", a.interval.start},
              {"end_unit", a.interval.end}};
    out << j.dump() << '\n';
  }
}

void DatasetManifest::validate() const {
  if (num_classes < 1) {
    throw DataError("manifest: num_classes must be >= 1");
  }
  std::map<std::string, double> durations;
  for (const auto& v : videos) {
    if (!durations.emplace(v.video_id, v.duration).second) {
      throw DataError("manifest: duplicate video id '" + v.video_id + "'");
    }
    if (!(v.duration > 0.0)) {
      throw DataError("manifest: video '" + v.video_id + "' has non-positive duration");
    }
  }
  for (const auto& a : annotations) {
    const auto it = durations.find(a.video_id);
    if (it == durations.end()) {
      throw DataError("annotation references unknown video '" + a.video_id + "'");
    }
    if (a.class_id < 1 || a.class_id > num_classes) {
      throw DataError("annotation class " + std::to_string(a.class_id) + " outside [1, " +
                      std::to_string(num_classes) + "]");
    }
    if (a.interval.start < 0.0 || a.interval.end > it->second) {
      throw DataError("annotation on '" + a.video_id + "' lies outside [0, duration]");
    }
  }
}

const VideoEntry& DatasetManifest::video(const std::string& id) const {
  for (const auto& v : videos) {
    if (v.video_id == id) return v;
  }
  throw DataError("unknown video '" + id + "'");
}

std::vector<Annotation> DatasetManifest::annotations_for(const std::string& video_id) const {
  std::vector<Annotation> out;
  for (const auto& a : annotations) {
    if (a.video_id == video_id) out.push_back(a);
  }
  return out;
}

std::vector<const VideoEntry*> DatasetManifest::subset(const std::string& name) const {
  std::vector<const VideoEntry*> out;
  for (const auto& v : videos) {
    if (v.subset == name) out.push_back(&v);
  }
  return out;
}

DatasetManifest load_manifest(const fs::path& path) {
  const fs::path base = path.parent_path();
  DatasetManifest m;
  try {
    const json j = json::parse(read_file(path));
    m.num_classes = j.at("num_classes").get<int>();
    for (const auto& v : j.at("videos")) {
      VideoEntry e;
      e.video_id = v.at("video_id").get<std::string>();
      e.rgb_path = base / v.at("rgb").get<std::string>();
      e.flow_path = base / v.at("flow").get<std::string>();
      e.duration = v.at("duration").get<double>();
      e.subset = v.value("subset", std::string("test"));
      m.videos.push_back(std::move(e));
    }
    m.annotations = load_annotations(base / j.at("annotations").get<std::string>());
  } catch (const json::exception& e) {
    throw DataError("manifest '" + path.string() + "': " + e.what());
  }
  m.validate();
  return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  const fs::path base = path.parent_path();
  json videos = json::array();
  for (const auto& v : manifest.videos) {
    videos.push_back({{"video_id", v.video_id},
                      {"rgb", fs::relative(v.rgb_path, base).generic_string()},
                      {"flow", fs::relative(v.flow_path, base).generic_string()},
                      {"duration", v.duration},
                      {"subset", v.subset}});
  }
  const json j = {{"num_classes", manifest.num_classes},
                  {"annotations", "annotations.jsonl"},
                  {"videos", std::move(videos)}};
  save_annotations(base / "annotations.jsonl", manifest.annotations);
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw DataError("cannot write '" + path.string() + "'");
  }
  out << j.dump(2) << '\n';
}

FeatureSequence fuse_early(const FeatureSequence& rgb, const FeatureSequence& flow) {
  if (rgb.size() != flow.size()) {
    throw DataError("fuse_early: '" + rgb.video_id + "' streams differ in unit count (" +
                    std::to_string(rgb.size()) + " vs " + std::to_string(flow.size()) + ")");
  }
  UnitMatrix fused(rgb.size(), rgb.dim() + flow.dim());
  fused << rgb.units, flow.units;
  return {rgb.video_id, std::move(fused)};
}

VideoFeatures load_video(const VideoEntry& entry) {
  VideoFeatures v;
  v.video_id = entry.video_id;
  v.duration = entry.duration;
  v.rgb = load_features(entry.rgb_path, entry.video_id);
  v.flow = load_features(entry.flow_path, entry.video_id);
  v.fused = fuse_early(v.rgb, v.flow);
  if (static_cast<double>(v.rgb.size()) + 1e-9 < entry.duration) {
    throw DataError("video '" + entry.video_id + "': manifest duration exceeds unit count");
  }
  return v;
}

// --- synthetic ----------------------------------------------------------------

void SynthConfig::validate() const {
  if (num_videos < 1 || units_per_video < 1 || dim < 1 || num_classes < 1 ||
      actions_per_video < 0) {
    throw UsageError("synth: counts must be positive");
  }
  if (min_length < 3 || min_length > max_length || max_length > units_per_video) {
    throw UsageError("synth: need 3 <= min_length <= max_length <= units_per_video");
  }
  if (noise < 0.0 || rgb_scale < 0.0) {
    throw UsageError("synth: noise and rgb_scale must be non-negative");
  }
  if (test_fraction < 0.0 || test_fraction > 1.0) {
    throw UsageError("synth: test_fraction must lie in [0, 1]");
  }
}

int reversed_partner(int class_id, int num_classes) {
  if (class_id % 2 == 1) {
    return class_id + 1 <= num_classes ? class_id + 1 : class_id;
  }
  return class_id - 1;
}

namespace {

Eigen::VectorXf random_signs(Rng& rng, int dim) {
  Eigen::VectorXf v(dim);
  for (int i = 0; i < dim; ++i) v[i] = (rng.next() >> 63) ? 1.0f : -1.0f;
  return v;
}

// Prototypes for one pair: ends differ in at least a quarter of coordinates.
std::vector<std::vector<Eigen::VectorXf>> pair_prototypes(Rng& rng, int dim, bool has_partner) {
  const Eigen::VectorXf a = random_signs(rng, dim);
  const Eigen::VectorXf b = random_signs(rng, dim);
  Eigen::VectorXf c = random_signs(rng, dim);
  const int min_diff = std::max(1, dim / 4);
  while ((a.array() != c.array()).count() < min_diff) c = random_signs(rng, dim);
  if (!has_partner) {
    return {{a, b, a}};
  }
  return {{a, b, c}, {c, b, a}};
}

}  // namespace

SynthSignatures synth_signatures(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed ^ 0x5157A7E5EEDull);
  SynthSignatures sig;
  for (int c = 1; c <= cfg.num_classes; c += 2) {
    const bool pair = c + 1 <= cfg.num_classes;
    for (auto& p : pair_prototypes(rng, cfg.dim, pair)) sig.flow.push_back(std::move(p));
    for (auto& p : pair_prototypes(rng, cfg.dim, pair)) sig.rgb.push_back(std::move(p));
  }
  return sig;
}

DatasetManifest generate_synthetic(const SynthConfig& cfg, const fs::path& dir) {
  cfg.validate();
  const SynthSignatures sig = synth_signatures(cfg);
  constexpr int kGap = 2;  // background units kept between actions
  if (static_cast<long>(cfg.actions_per_video) * (cfg.min_length + kGap) > cfg.units_per_video) {
    throw DataError("synth: actions cannot fit in the video length");
  }

  fs::create_directories(dir / "videos");
  Rng rng(cfg.seed);
  DatasetManifest manifest;
  manifest.num_classes = cfg.num_classes;
  const int num_train = static_cast<int>(std::lround(cfg.num_videos * (1.0 - cfg.test_fraction)));

  for (int v = 0; v < cfg.num_videos; ++v) {
    char id_buf[32];
    std::snprintf(id_buf, sizeof(id_buf), "video_%04d", v);
    const std::string id(id_buf);
    const int n = cfg.units_per_video;

    UnitMatrix rgb(n, cfg.dim);
    UnitMatrix flow(n, cfg.dim);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < cfg.dim; ++j) rgb(i, j) = static_cast<float>(cfg.noise * rng.normal());
      for (int j = 0; j < cfg.dim; ++j) flow(i, j) = static_cast<float>(cfg.noise * rng.normal());
    }

    // Rejection-sample non-overlapping placements.
    std::vector<std::pair<int, int>> spans;
    std::vector<int> classes;
    int attempts = 0;
    while (static_cast<int>(spans.size()) < cfg.actions_per_video) {
      if (++attempts > 10000) {
        throw DataError("synth: infeasible placement for video " + id);
      }
      int len = cfg.min_length + static_cast<int>(rng.below(cfg.max_length - cfg.min_length + 1));
      len -= len % 3;
      if (len < cfg.min_length) len += 3;
      if (len > n) continue;
      const int start = static_cast<int>(rng.below(n - len + 1));
      const int cls = 1 + static_cast<int>(rng.below(cfg.num_classes));
      bool clash = false;
      for (const auto& [s, e] : spans) {
        if (start < e + kGap && s < start + len + kGap) clash = true;
      }
      if (clash) continue;
      spans.emplace_back(start, start + len);
      classes.push_back(cls);
    }

    for (std::size_t a = 0; a < spans.size(); ++a) {
      const auto [s, e] = spans[a];
      const int third = (e - s) / 3;
      const auto& fp = sig.flow[classes[a] - 1];
      const auto& rp = sig.rgb[classes[a] - 1];
      for (int i = s; i < e; ++i) {
        const int seg = std::min(2, (i - s) / third);
        flow.row(i) += fp[seg].transpose();
        rgb.row(i) += static_cast<float>(cfg.rgb_scale) * rp[seg].transpose();
      }
    }

    // Deterministic annotation order: by start.
    std::vector<std::size_t> order(spans.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t x, std::size_t y) { return spans[x].first < spans[y].first; });
    for (std::size_t i : order) {
      manifest.annotations.push_back(
          {id, classes[i], Interval(spans[i].first, spans[i].second)});
    }

    VideoEntry entry;
    entry.video_id = id;
    entry.rgb_path = dir / "videos" / (id + ".rgb.uft");
    entry.flow_path = dir / "videos" / (id + ".flow.uft");
    entry.duration = n;
    entry.subset = v < num_train ? "validation" : "test";
    save_features(entry.rgb_path, {id, std::move(rgb)});
    save_features(entry.flow_path, {id, std::move(flow)});
    manifest.videos.push_back(std::move(entry));
  }

  manifest.validate();
  save_manifest(dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace talkit
