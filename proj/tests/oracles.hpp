#pragma once

// Independent reference implementations used to cross-check the library.
// They favour obviousness over speed and share no code with src/.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "talkit/core.hpp"
#include "talkit/net.hpp"
#include "talkit/proposals.hpp"
#include "talkit/rng.hpp"

namespace talkit::oracle {

inline double overlap_ratio(double s1, double e1, double s2, double e2) {
  const double inter = std::max(0.0, std::min(e1, e2) - std::max(s1, s2));
  const double uni = (e1 - s1) + (e2 - s2) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// --- gradient check ---------------------------------------------------------------

struct GradCheck {
  double max_rel_error = 0.0;
  std::int64_t params = 0;
  int redraws = 0;  // draws rejected for sitting on a kink
};

inline double loss_of(const TwoLayerNet<double>& net, const Eigen::MatrixXd& x,
                      const std::vector<ClipLabel>& labels, const LossConfig& cfg) {
  // Forward pass written out by hand.
  double total = 0.0;
  const Eigen::Index k = net.output_dim() / 3;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    Eigen::VectorXd h = net.w1.transpose() * x.col(j) + net.b1;
    for (Eigen::Index i = 0; i < h.size(); ++i) h[i] = h[i] > 0 ? h[i] : 0.0;
    const Eigen::VectorXd y = net.w2.transpose() * h + net.b2;
    double denom = 0.0;
    for (Eigen::Index c = 0; c < k; ++c) denom += std::exp(y[3 * c]);
    const ClipLabel& l = labels[static_cast<std::size_t>(j)];
    double sample = std::log(denom) - y[3 * l.class_id];
    if (l.class_id != 0) {
      for (int o = 0; o < 2; ++o) {
        const double r = y[3 * l.class_id + 1 + o] - (o == 0 ? l.offset_start : l.offset_end);
        const double a = std::abs(r);
        sample += cfg.reg_weight * (a < 1 ? 0.5 * r * r : a - 0.5);
      }
    }
    total += sample;
  }
  return cfg.reduction == Reduction::Mean ? total / static_cast<double>(x.cols()) : total;
}

/// Central differences over every parameter; relative error per entry is
/// |a - n| / max(|a|, |n|, floor). Central differences are undefined across
/// the ReLU and smooth-L1 kinks, so draws with a pre-activation or residual
/// within reach of a kink are redrawn.
inline GradCheck check_gradients(std::uint64_t seed, int n_f, int hidden, int classes, int batch,
                                 double eps = 1e-3, double floor = 1e-6) {
  Rng rng(seed);
  const double x_max = 2.0;
  const double z_margin = 4 * eps * x_max;
  const double r_margin = 0.05;
  TwoLayerNet<double> net;
  Eigen::MatrixXd x(n_f, batch);
  std::vector<ClipLabel> labels;
  int redraws = -1;
  for (bool clear = false; !clear;) {
    ++redraws;
    net = TwoLayerNet<double>::random(n_f, hidden, classes, rng.next());
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-x_max, x_max);
    labels.clear();
    for (int j = 0; j < batch; ++j) {
      labels.push_back({static_cast<int>(rng.below(static_cast<std::uint64_t>(classes) + 1)),
                        rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5)});
    }
    const Eigen::MatrixXd z = (net.w1.transpose() * x).colwise() + net.b1;
    clear = z.cwiseAbs().minCoeff() > z_margin;
    const auto out = forward_batch(net, x).output;
    for (int j = 0; j < batch && clear; ++j) {
      const ClipLabel& l = labels[static_cast<std::size_t>(j)];
      if (l.class_id == 0) continue;
      for (int o = 0; o < 2; ++o) {
        const double r = out(3 * l.class_id + 1 + o, j) - (o == 0 ? l.offset_start : l.offset_end);
        if (std::abs(std::abs(r) - 1.0) <= r_margin) clear = false;
      }
    }
  }
  const LossConfig cfg{rng.uniform(0.5, 2.0), seed % 2 ? Reduction::Sum : Reduction::Mean};
  const Gradients<double> g = backward(net, x, std::span<const ClipLabel>(labels), cfg);

  GradCheck out;
  out.params = net.parameter_count();
  out.redraws = redraws;
  const auto probe = [&](auto& param, const auto& analytic) {
    for (Eigen::Index i = 0; i < param.size(); ++i) {
      const double keep = param.data()[i];
      param.data()[i] = keep + eps;
      const double up = loss_of(net, x, labels, cfg);
      param.data()[i] = keep - eps;
      const double down = loss_of(net, x, labels, cfg);
      param.data()[i] = keep;
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic.data()[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      out.max_rel_error = std::max(out.max_rel_error, rel);
    }
  };
  probe(net.w1, g.w1);
  probe(net.b1, g.b1);
  probe(net.w2, g.w2);
  probe(net.b2, g.b2);
  return out;
}

// --- NMS ----------------------------------------------------------------------------

/// O(n^2) reference: an item survives iff no higher-ranked surviving item
/// overlaps it at or above the threshold. Rank: score desc, then start asc,
/// then input position.
inline std::vector<Proposal> nms_reference(const std::vector<Proposal>& items, double threshold) {
  const std::size_t n = items.size();
  std::vector<std::size_t> rank(n);
  std::iota(rank.begin(), rank.end(), 0);
  const auto before = [&](std::size_t a, std::size_t b) {
    if (items[a].score != items[b].score) return items[a].score > items[b].score;
    if (items[a].interval.start != items[b].interval.start) {
      return items[a].interval.start < items[b].interval.start;
    }
    return a < b;
  };
  // Selection sort, to stay independent of std::stable_sort.
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = i;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (before(rank[j], rank[best])) best = j;
    }
    std::swap(rank[i], rank[best]);
  }
  std::vector<bool> alive(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    bool ok = true;
    for (std::size_t j = 0; j < i; ++j) {
      const Proposal& a = items[rank[j]];
      const Proposal& b = items[rank[i]];
      if (alive[j] && overlap_ratio(a.interval.start, a.interval.end, b.interval.start,
                                    b.interval.end) >= threshold) {
        ok = false;
      }
    }
    alive[i] = ok;
  }
  std::vector<Proposal> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (alive[i]) kept.push_back(items[rank[i]]);
  }
  return kept;
}

// --- matching and AP ----------------------------------------------------------------

struct BruteDet {
  std::string video;
  int cls;
  double start, end, score;
};

struct BruteGt {
  std::string video;
  int cls;
  double start, end;
};

/// TP flags in evaluation order for one class.
inline std::vector<bool> brute_flags(const std::vector<BruteDet>& dets,
                                     const std::vector<BruteGt>& gts, int cls, double th) {
  std::vector<BruteDet> mine;
  for (const auto& d : dets) {
    if (d.cls == cls) mine.push_back(d);
  }
  // Insertion sort by (score desc, video asc, start asc); stable for full ties.
  for (std::size_t i = 1; i < mine.size(); ++i) {
    for (std::size_t j = i; j > 0; --j) {
      const auto& a = mine[j - 1];
      const auto& b = mine[j];
      const bool swap = b.score > a.score ||
                        (b.score == a.score && (b.video < a.video ||
                                                (b.video == a.video && b.start < a.start)));
      if (!swap) break;
      std::swap(mine[j - 1], mine[j]);
    }
  }
  std::vector<bool> taken(gts.size(), false);
  std::vector<bool> flags;
  for (const auto& d : mine) {
    int best = -1;
    double best_iou = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].cls != cls || gts[g].video != d.video) continue;
      const double iou = overlap_ratio(d.start, d.end, gts[g].start, gts[g].end);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    const bool tp = best >= 0 && best_iou >= th;
    if (tp) taken[static_cast<std::size_t>(best)] = true;
    flags.push_back(tp);
  }
  return flags;
}

/// All-points interpolated AP written as a sum over true positives: each
/// recall step of 1/num_gt is weighted by the best precision at that rank
/// or any later one.
inline double brute_ap(const std::vector<bool>& flags, int num_gt) {
  if (num_gt == 0) return 0.0;
  double ap = 0.0;
  int tp_seen = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (!flags[i]) continue;
    ++tp_seen;
    double best = 0.0;
    int tp = tp_seen - 1;
    for (std::size_t j = i; j < flags.size(); ++j) {
      if (flags[j]) ++tp;
      best = std::max(best, static_cast<double>(tp) / static_cast<double>(j + 1));
    }
    ap += best / num_gt;
  }
  return ap;
}

inline double brute_map(const std::vector<BruteDet>& dets, const std::vector<BruteGt>& gts,
                        int num_classes, double th) {
  double sum = 0.0;
  int counted = 0;
  for (int c = 1; c <= num_classes; ++c) {
    int num_gt = 0;
    for (const auto& g : gts) num_gt += g.cls == c;
    if (num_gt == 0) continue;
    sum += brute_ap(brute_flags(dets, gts, c, th), num_gt);
    ++counted;
  }
  return counted ? sum / counted : 0.0;
}

}  // namespace talkit::oracle
