#include "talkit/repr.hpp"

#include <cstdio>
#include <sstream>

namespace talkit {

std::int64_t param_count(const ReprSpec& spec, std::int64_t dim, int num_classes,
                         std::int64_t hidden) {
  if (num_classes < 1 || hidden < 1) {
    throw UsageError("param_count: classes and hidden width must be >= 1");
  }
  const std::int64_t n_f = repr_output_dim(spec, dim);
  const std::int64_t out = 3 * (std::int64_t{num_classes} + 1);
  return n_f * hidden + hidden + hidden * out + out;
}

std::vector<ReprSpec> reference_table_specs() {
  return {
      {Stpp{{1, 2}}, 2},    {Stpp{{1, 2, 4}}, 2}, {Bsp{2, 4}, 2},  {Bsp{4, 8}, 2},
      {Bsp{8, 16}, 2},      {KPartPool{3}, 2},    {KPartPool{5}, 2}, {KPartPool{10}, 2},
  };
}

namespace {

std::string method_name(const ReprSpec& spec) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, GlobalPool>) return "GlobalPool";
        else if constexpr (std::is_same_v<T, KPartPool>) return "KPart";
        else if constexpr (std::is_same_v<T, Stpp>) return "STPP";
        else return "BSP";
      },
      spec.variant);
}

std::string setting_name(const ReprSpec& spec) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, GlobalPool>) {
          return "-";
        } else if constexpr (std::is_same_v<T, KPartPool>) {
          return "k=" + std::to_string(v.k);
        } else if constexpr (std::is_same_v<T, Stpp>) {
          return "L=" + std::to_string(v.levels.size());
        } else {
          const auto a = std::to_string(v.context_points);
          return a + "/" + std::to_string(v.interior_points) + "/" + a;
        }
      },
      spec.variant);
}

}  // namespace

std::string format_param_table(const std::vector<ParamCountRow>& rows) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %-9s %-14s %14s %10s\n", "Method", "Setting", "Spec",
                "#Params", "#Params(M)");
  os << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-10s %-9s %-14s %14lld %10.2f\n",
                  method_name(r.spec).c_str(), setting_name(r.spec).c_str(),
                  to_string(r.spec).c_str(), static_cast<long long>(r.params), r.params / 1e6);
    os << line;
  }
  return os.str();
}

}  // namespace talkit
