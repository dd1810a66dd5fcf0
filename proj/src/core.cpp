#include "talkit/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace talkit {

Interval::Interval(double s, double e) : start(s), end(e) {
  if (!std::isfinite(s) || !std::isfinite(e)) {
    throw DataError("interval endpoints must be finite");
  }
  if (s < 0.0) {
    throw DataError("interval start must be non-negative");
  }
  if (!(s < e)) {
    std::ostringstream os;
    os << "interval [" << s << ", " << e << ") has start >= end";
    throw DataError(os.str());
  }
}

double tiou(const Interval& a, const Interval& b) {
  const double inter = std::min(a.end, b.end) - std::max(a.start, b.start);
  if (inter <= 0.0) {
    return 0.0;
  }
  const double uni = std::max(a.end, b.end) - std::min(a.start, b.start);
  return inter / uni;
}

void validate(const ReprSpec& spec) {
  if (spec.n_ctx < 0) {
    throw UsageError("n_ctx must be >= 0");
  }
  std::visit(
      [](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, KPartPool>) {
          if (v.k < 1) throw UsageError("kpart: k must be >= 1");
        } else if constexpr (std::is_same_v<T, Stpp>) {
          if (v.levels.empty()) throw UsageError("stpp: need at least one level");
          for (int b : v.levels) {
            if (b < 1) throw UsageError("stpp: every level must split into >= 1 parts");
          }
        } else if constexpr (std::is_same_v<T, Bsp>) {
          if (v.context_points < 1 || v.interior_points < 1) {
            throw UsageError("bsp: point counts must be >= 1");
          }
        }
      },
      spec.variant);
}

std::int64_t repr_block_count(const ReprSpec& spec) {
  validate(spec);
  const std::int64_t ctx = spec.n_ctx > 0 ? 2 : 0;
  return std::visit(
      [ctx](const auto& v) -> std::int64_t {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, GlobalPool>) {
          return 1 + ctx;
        } else if constexpr (std::is_same_v<T, KPartPool>) {
          return v.k + ctx;
        } else if constexpr (std::is_same_v<T, Stpp>) {
          return std::accumulate(v.levels.begin(), v.levels.end(), std::int64_t{0}) + ctx;
        } else {
          return 2 * std::int64_t{v.context_points} + v.interior_points + ctx;
        }
      },
      spec.variant);
}

std::int64_t repr_output_dim(const ReprSpec& spec, std::int64_t dim) {
  if (dim < 1) {
    throw UsageError("feature dimension must be >= 1");
  }
  return repr_block_count(spec) * dim;
}

std::string to_string(const ReprSpec& spec) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, GlobalPool>) {
          return "global";
        } else if constexpr (std::is_same_v<T, KPartPool>) {
          return "kpart:" + std::to_string(v.k);
        } else if constexpr (std::is_same_v<T, Stpp>) {
          std::string s = "stpp:";
          for (std::size_t i = 0; i < v.levels.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(v.levels[i]);
          }
          return s;
        } else {
          const auto a = std::to_string(v.context_points);
          return "bsp:" + a + "/" + std::to_string(v.interior_points) + "/" + a;
        }
      },
      spec.variant);
}

namespace {

std::vector<int> parse_ints(const std::string& text, char sep) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    std::size_t used = 0;
    int value = 0;
    try {
      value = std::stoi(item, &used);
    } catch (const std::exception&) {
      throw UsageError("expected integer, got '" + item + "'");
    }
    if (used != item.size()) {
      throw UsageError("expected integer, got '" + item + "'");
    }
    out.push_back(value);
  }
  return out;
}

}  // namespace

ReprSpec parse_repr(const std::string& text, int n_ctx) {
  ReprSpec spec;
  spec.n_ctx = n_ctx;
  const auto colon = text.find(':');
  const std::string kind = text.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : text.substr(colon + 1);
  if (kind == "global") {
    spec.variant = GlobalPool{};
  } else if (kind == "kpart") {
    const auto v = parse_ints(args, ',');
    if (v.size() != 1) throw UsageError("kpart expects one value: kpart:<k>");
    spec.variant = KPartPool{v[0]};
  } else if (kind == "stpp") {
    spec.variant = Stpp{parse_ints(args, ',')};
  } else if (kind == "bsp") {
    const auto v = parse_ints(args, '/');
    if (v.size() == 2) {
      spec.variant = Bsp{v[0], v[1]};
    } else if (v.size() == 3 && v[0] == v[2]) {
      spec.variant = Bsp{v[0], v[1]};
    } else {
      throw UsageError("bsp expects bsp:<A>/<B>/<A>");
    }
  } else {
    throw UsageError("unknown representation '" + text + "'");
  }
  validate(spec);
  return spec;
}

}  // namespace talkit
