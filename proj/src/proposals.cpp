#include "talkit/proposals.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "talkit/repr.hpp"

namespace talkit {

using nlohmann::json;

void WindowConfig::validate() const {
  if (lengths.empty()) {
    throw UsageError("window lengths must not be empty");
  }
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    if (!(lengths[i] > 0.0) || (i > 0 && !(lengths[i] > lengths[i - 1]))) {
      throw UsageError("window lengths must be positive and strictly increasing");
    }
  }
  if (!(stride > 0.0 && stride <= 1.0)) {
    throw UsageError("window stride must lie in (0, 1]");
  }
}

std::vector<Interval> slide_windows(double duration, const WindowConfig& cfg) {
  cfg.validate();
  if (!(duration >= 1.0)) {
    throw DataError("slide_windows: duration must be >= 1 unit");
  }
  std::vector<Interval> out;
  std::set<std::pair<double, double>> seen;
  const auto add = [&](double s, double e) {
    if (seen.emplace(s, e).second) out.emplace_back(s, e);
  };
  for (double len : cfg.lengths) {
    if (len >= duration) {
      add(0.0, duration);
      continue;
    }
    const double step = cfg.stride * len;
    for (long j = 0;; ++j) {
      const double s = static_cast<double>(j) * step;
      if (s + len > duration + 1e-9) break;
      add(s, std::min(s + len, duration));
    }
  }
  return out;
}

namespace {

void sort_by_score(std::vector<Proposal>& items) {
  std::stable_sort(items.begin(), items.end(), [](const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.interval.start < b.interval.start;
  });
}

}  // namespace

ProposalList score_proposals(const FeatureSequence& seq, double duration,
                             const std::vector<Interval>& windows, const Net& tpg,
                             const ReprSpec& spec) {
  if (tpg.num_classes() != 1) {
    throw DataError("score_proposals: proposal network must be binary (out_dim 6)");
  }
  if (tpg.input_dim() != repr_output_dim(spec, seq.dim())) {
    throw DataError("score_proposals: representation '" + to_string(spec) +
                    "' does not match proposal network input");
  }
  ProposalList list{seq.video_id, {}};
  list.proposals.reserve(windows.size());
  for (const Interval& w : windows) {
    const Decision<float> d = decide(forward(tpg, extract(seq.units, w, spec)));
    const double s = std::clamp(w.start + d.offsets(1, 0), 0.0, duration);
    const double e = std::clamp(w.end + d.offsets(1, 1), 0.0, duration);
    const Interval refined = (e - s >= kMinIntervalLength) ? Interval(s, e) : w;
    list.proposals.push_back({refined, static_cast<double>(d.probs[1])});
  }
  sort_by_score(list.proposals);
  return list;
}

AnSelection select_by_an(const ProposalSet& sets, double average_number) {
  if (!(average_number > 0.0)) {
    throw UsageError("select_by_an: AN must be positive");
  }
  struct Ref {
    double score;
    std::size_t video;
    std::size_t pos;
  };
  std::vector<Ref> all;
  for (std::size_t v = 0; v < sets.size(); ++v) {
    for (std::size_t i = 0; i < sets[v].proposals.size(); ++i) {
      all.push_back({sets[v].proposals[i].score, v, i});
    }
  }
  const auto budget =
      static_cast<std::size_t>(std::llround(average_number * static_cast<double>(sets.size())));
  AnSelection sel;
  if (budget >= all.size()) {
    sel.proposals = sets;
    sel.kept_all = budget > all.size();
    sel.threshold = all.empty() ? 0.0 : std::min_element(all.begin(), all.end(), [](auto& a, auto& b) {
                                          return a.score < b.score;
                                        })->score;
    return sel;
  }
  std::stable_sort(all.begin(), all.end(), [](const Ref& a, const Ref& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.video != b.video) return a.video < b.video;
    return a.pos < b.pos;
  });
  std::vector<std::vector<bool>> keep(sets.size());
  for (std::size_t v = 0; v < sets.size(); ++v) keep[v].assign(sets[v].proposals.size(), false);
  for (std::size_t r = 0; r < budget; ++r) keep[all[r].video][all[r].pos] = true;
  sel.threshold = budget > 0 ? all[budget - 1].score : 1.0;
  for (std::size_t v = 0; v < sets.size(); ++v) {
    ProposalList list{sets[v].video_id, {}};
    for (std::size_t i = 0; i < sets[v].proposals.size(); ++i) {
      if (keep[v][i]) list.proposals.push_back(sets[v].proposals[i]);
    }
    sel.proposals.push_back(std::move(list));
  }
  return sel;
}

std::vector<Proposal> nms(std::vector<Proposal> items, double threshold) {
  sort_by_score(items);
  std::vector<Proposal> kept;
  for (const auto& p : items) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Proposal& k) {
      return tiou(k.interval, p.interval) >= threshold;
    });
    if (!suppressed) kept.push_back(p);
  }
  return kept;
}

std::vector<Detection> nms(std::vector<Detection> items, double threshold) {
  std::stable_sort(items.begin(), items.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.interval.start < b.interval.start;
  });
  std::vector<Detection> kept;
  for (auto& d : items) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.class_id == d.class_id && k.video_id == d.video_id &&
             tiou(k.interval, d.interval) >= threshold;
    });
    if (!suppressed) kept.push_back(std::move(d));
  }
  return kept;
}

void save_proposals(const std::filesystem::path& path, const ProposalSet& sets) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw DataError("cannot write '" + path.string() + "'");
  }
  for (const auto& list : sets) {
    for (const auto& p : list.proposals) {
      out << json{{"video_id", list.video_id},
                  {"start", p.interval.start},
                  {"end", p.interval.end},
                  {"score", p.score}}
                 .dump()
          << '\n';
    }
  }
}

ProposalSet load_proposals(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open proposals '" + path.string() + "'");
  }
  ProposalSet sets;
  std::map<std::string, std::size_t> index;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      const auto id = j.at("video_id").get<std::string>();
      auto [it, fresh] = index.emplace(id, sets.size());
      if (fresh) sets.push_back({id, {}});
      auto& list = sets[it->second];
      const double score = j.at("score").get<double>();
      if (!(score >= 0.0 && score <= 1.0)) {
        throw DataError("proposal score outside [0, 1]");
      }
      list.proposals.push_back(
          {Interval(j.at("start").get<double>(), j.at("end").get<double>()), score});
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": " + e.what());
    }
  }
  for (auto& list : sets) sort_by_score(list.proposals);
  return sets;
}

}  // namespace talkit
